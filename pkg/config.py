import os
from dotenv import load_dotenv

load_dotenv()


def _env_int(name, default):
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else default


def _env_float(name, default):
    value = os.environ.get(name)
    return float(value) if value not in (None, '') else default


class Config:
    # Simulation defaults
    SIM_SEED = _env_int('SIM_SEED', 1)
    SIM_N = _env_int('SIM_N', 8)
    SIM_T = os.environ.get('SIM_T')  # empty -> floor((n-1)/2)
    SIM_S_EXPECTED = _env_int('SIM_S_EXPECTED', 20)
    SIM_C_EXPECTED = _env_int('SIM_C_EXPECTED', 9)
    SIM_FAILURE_BOUND = _env_float('SIM_FAILURE_BOUND', 5e-9)
    SIM_FORCED_SORTITION = os.environ.get('SIM_FORCED_SORTITION', '1') not in ('0', 'false', 'False')
    SIM_LATENCY_MS = _env_float('SIM_LATENCY_MS', 0.0)
    SIM_BROADCAST_MODE = os.environ.get('SIM_BROADCAST_MODE', 'extended')

    # Bulletin board storage
    PBB_BACKEND = os.environ.get('PBB_BACKEND', 'memory')
    PBB_DATABASE_URL = os.environ.get('PBB_DATABASE_URL') or 'sqlite://'

    # Output
    REPORT_DIR = os.environ.get('REPORT_DIR', 'reports')
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.environ.get('LOG_FORMAT', '%(asctime)s %(levelname)s %(name)s: %(message)s')

    # Protocol constants
    FS_ROUNDS = 3
    MAX_OP_RETURN = 80
    EXHAUSTIVE_PARTITION_LIMIT = 20
    GCD_SCAN_WINDOW = 4096

    @classmethod
    def default_t(cls, n):
        if cls.SIM_T not in (None, ''):
            return int(cls.SIM_T)
        return (n - 1) // 2

    @classmethod
    def validate(cls, n, t=None):
        """Resilience bound n >= 2t+1 for the given (or default) t"""
        from services.errors import ConfigError

        t = cls.default_t(n) if t is None else t
        if n < 1 or t < 0 or n < 2 * t + 1:
            raise ConfigError(f'need n >= 2t+1, got n={n} t={t}')
        if cls.PBB_BACKEND not in ('memory', 'sql'):
            raise ConfigError(f'unknown PBB backend {cls.PBB_BACKEND!r}')
        return t
