from django.apps import AppConfig


class LmiConfig(AppConfig):
    name = "lmi"
