from django.apps import AppConfig


class NncontrollerConfig(AppConfig):
    name = "nncontroller"
