from django.apps import AppConfig


class SparseConfig(AppConfig):
    name = "apps.sparse"
    verbose_name = "Sparse matrices"
