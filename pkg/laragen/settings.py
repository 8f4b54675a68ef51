"""
Django settings for the laragen project.

The project has no web surface: Django provides app discovery, settings,
logging configuration and the management-command runner that drives the
training and evaluation pipeline.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv("LARAGEN_SECRET_KEY", "laragen-offline-only")

DEBUG = os.getenv("LARAGEN_DEBUG", "0") == "1"

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "rest_framework",
    "commons",
    "affect",
    "corpus",
    "extractor",
    "conditioning",
    "backbone",
    "proxy",
    "predictor",
    "metrics",
    "trainer",
    "pipeline",
]

MIDDLEWARE = []

# No database: every artifact is a file on disk.
DATABASES = {}

USE_I18N = False

USE_TZ = True

TIME_ZONE = "UTC"

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


LARAGEN = {
    "THREADS": int(os.getenv("LARAGEN_THREADS", "1")),
    "EXTRACTOR_SEED": 42,
    "SLOW_TESTS": os.getenv("LARAGEN_SLOW_TESTS", "") not in ("", "0"),
    "LOG_LEVEL": os.getenv("LARAGEN_LOG_LEVEL", "INFO"),
}

_APP_LOGGERS = [
    "commons",
    "affect",
    "corpus",
    "extractor",
    "conditioning",
    "backbone",
    "proxy",
    "predictor",
    "metrics",
    "trainer",
    "pipeline",
]

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
        },
        **{
            name: {
                "handlers": ["console"],
                "level": LARAGEN["LOG_LEVEL"],
                "propagate": False,
            }
            for name in _APP_LOGGERS
        },
    },
}

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": ["rest_framework.renderers.JSONRenderer"],
    "UNAUTHENTICATED_USER": None,
    "STRICT_JSON": True,
}
