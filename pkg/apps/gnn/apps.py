from django.apps import AppConfig


class GnnConfig(AppConfig):
    name = "apps.gnn"
