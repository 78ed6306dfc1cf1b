"""Secure multiuser MISO downlink design with a dual-mode active IRS.

Library layout:

- :mod:`airsec.sysmodel`   channel generation, closed-form link metrics
- :mod:`airsec.conic`      real conic programs and the interior-point backend
- :mod:`airsec.bs_opt`     base-station precoder/AN subproblem (SDR)
- :mod:`airsec.irs_opt`    IRS amplitude/phase/mode subproblem (SCA)
- :mod:`airsec.driver`     alternating optimization and baseline schemes
- :mod:`airsec.harness`    Monte Carlo sweeps, verification suites, reports
"""

__version__ = "0.1.0"
