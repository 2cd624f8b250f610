"""Physical constants and unit conversions (SI internally: Pa, m, s, kg)."""

MD_TO_M2 = 9.869233e-16  # millidarcy -> m^2
SECONDS_PER_YEAR = 365.25 * 86400.0
SECONDS_PER_DAY = 86400.0
GRAVITY = 9.81  # m/s^2

GPA = 1.0e9
MPA = 1.0e6
KPA = 1.0e3

MEGATONNE_PER_YEAR = 1.0e9 / SECONDS_PER_YEAR  # kg/s
