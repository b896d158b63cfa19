from django.apps import AppConfig


class IqclibConfig(AppConfig):
    name = "iqclib"
