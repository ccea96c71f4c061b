"""Reference values for log(1 - e^x) at 40 digits."""
import mpmath as mp

mp.mp.dps = 40
print("ln 0.5", mp.nstr(mp.log(mp.mpf("0.5")), 20))
for x in ["-1e-18", "-1e-5", "-0.5", "-0.6931", "-0.7", "-3", "-30", "-700"]:
    v = mp.log(-mp.expm1(mp.mpf(x)))
    print(x, mp.nstr(v, 20))
print("1/log 3", mp.nstr(1 / mp.log(3), 20))
