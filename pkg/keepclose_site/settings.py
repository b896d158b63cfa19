"""
Django settings for the keepclose project.

The project hosts a certification library for neural-network feedback loops and
its batch commands (certify, simulate, validate, report). There is no web
surface; Django provides settings, logging, the test runner, the ORM for stored
certificates and the management-command framework.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

from pathlib import Path
import os
import sys

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(BASE_DIR / "apps"))

# Generate from django utils. Set in .env
SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "dev-insecure-key")

DEBUG = os.environ.get("DJANGO_DEBUG", "1") == "1"

ALLOWED_HOSTS = ["localhost", "127.0.0.1"]

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    # Project apps
    "core",
    "sysmodels",
    "nncontroller",
    "iqclib",
    "errorsys",
    "lmi",
    "certify",
    "simkit",
    "scenarios",
]

# Database
# https://docs.djangoproject.com/en/6.0/ref/settings/#databases
if os.environ.get("DB_ENGINE", "sqlite") == "postgresql":
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": os.environ.get("DB_NAME", "keepclose_db"),
            "USER": os.environ.get("DB_USER", "keepclose_dev"),
            "PASSWORD": os.environ.get("DB_PASSWORD", "keepclose_dev"),
            "HOST": os.environ.get("DB_HOST", "localhost"),
            "PORT": os.environ.get("DB_PORT", "5432"),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": os.environ.get("DB_NAME", str(BASE_DIR / "keepclose.sqlite3")),
        }
    }

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"

# Internationalization
# https://docs.djangoproject.com/en/6.0/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

# Logging
# https://docs.djangoproject.com/en/6.0/topics/logging/
KEEPCLOSE_LOG_LEVEL = os.environ.get("KEEPCLOSE_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "keepclose": {"handlers": ["console"], "level": KEEPCLOSE_LOG_LEVEL},
        **{
            app: {"handlers": ["console"], "level": KEEPCLOSE_LOG_LEVEL, "propagate": False}
            for app in (
                "core",
                "sysmodels",
                "nncontroller",
                "iqclib",
                "errorsys",
                "lmi",
                "certify",
                "simkit",
                "scenarios",
            )
        },
    },
}

# Certification numerics
KEEPCLOSE_TOL_STAB = 1e-9
KEEPCLOSE_TOL_FEAS = 1e-7
# Margin requested from the solver; verification then uses TOL_FEAS / 2.
KEEPCLOSE_SOLVE_MARGIN = 1e-6
KEEPCLOSE_BISECT_TOL = 1e-4
KEEPCLOSE_BISECT_MAX_ITER = 40
KEEPCLOSE_EPS_MARGIN = 0.05
KEEPCLOSE_MIN_GRID = 100
# Tensor grids above these sizes fall back to Sobol samples
KEEPCLOSE_SAMPLE_BUDGET = 2**18
KEEPCLOSE_TRAIN_SAMPLES = 2**14
KEEPCLOSE_VERTEX_CAP = 4096
KEEPCLOSE_SINGULAR_COND = 1e12
KEEPCLOSE_MODEL_MATCH_TOL = 1e-12
KEEPCLOSE_BLOWUP = 1e12
KEEPCLOSE_SOLVERS = [
    name.strip()
    for name in os.environ.get("KEEPCLOSE_SOLVERS", "CLARABEL,SCS").split(",")
    if name.strip()
]
KEEPCLOSE_THREADS = max(1, int(os.environ.get("KEEPCLOSE_THREADS", "4")))

# Batch outputs
KEEPCLOSE_OUTPUT_DIR = Path(os.environ.get("KEEPCLOSE_OUTPUT_DIR", BASE_DIR / "output"))
KEEPCLOSE_SCENARIO_DIR = BASE_DIR / "apps" / "scenarios" / "data"
