from django.apps import AppConfig


class ErrorsysConfig(AppConfig):
    name = "errorsys"
