from django.apps import AppConfig


class AffectConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "affect"
