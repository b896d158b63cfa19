from django.apps import AppConfig


class SysmodelsConfig(AppConfig):
    name = "sysmodels"
