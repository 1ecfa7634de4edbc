from rest_framework import serializers

from apps.problems.serializers import SEED_MAX


def _range_field(child):
    return serializers.ListField(child=child, min_length=2, max_length=2, required=False)


class GenConfigSerializer(serializers.Serializer):
    count = serializers.IntegerField(min_value=0)
    test_fraction = serializers.FloatField(min_value=0.0, max_value=1.0, default=0.2)
    problem = serializers.ChoiceField(choices=["diffusion", "radiation"], default="diffusion")
    dim = serializers.ChoiceField(choices=[2, 3, "mixed"], default=2)
    nx = _range_field(serializers.IntegerField(min_value=2))
    bx = _range_field(serializers.IntegerField(min_value=1))
    M = _range_field(serializers.IntegerField(min_value=0))
    omega_er = _range_field(serializers.FloatField(min_value=0.0))
    omega_ei = _range_field(serializers.FloatField(min_value=0.0))
    kappa_y_fixed = serializers.BooleanField(default=False)
    delta = serializers.FloatField(min_value=0.0, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=SEED_MAX, required=False)

    def validate(self, attrs):
        errors = {}
        for name in ("nx", "bx", "M", "omega_er", "omega_ei"):
            if name in attrs and attrs[name][0] > attrs[name][1]:
                errors[name] = "range must be given as [low, high] with low <= high"
        if attrs["problem"] == "radiation" and attrs.get("kappa_y_fixed"):
            errors["kappa_y_fixed"] = "only applies to diffusion problems"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class ManifestEntrySerializer(serializers.Serializer):
    matrix_id = serializers.CharField()
    matrix_path = serializers.CharField()
    problem = serializers.ChoiceField(choices=["diffusion", "radiation", "external"])
    spec = serializers.DictField(allow_null=True, required=False, default=None)
    split = serializers.ChoiceField(choices=["train", "test"])
    n_rows = serializers.IntegerField(min_value=0)
    nnz = serializers.IntegerField(min_value=0)
    multiscale_rows = serializers.IntegerField(min_value=0)
    theta_opt = serializers.FloatField(allow_null=True, required=False, default=None)
    iters_at_opt = serializers.IntegerField(allow_null=True, required=False, default=None)
    grid_csv = serializers.CharField(allow_null=True, required=False, default=None)

    def validate_theta_opt(self, value):
        if value is not None and not 0.0 < value < 1.0:
            raise serializers.ValidationError("theta_opt must lie in (0, 1)")
        return value


class ManifestSerializer(serializers.Serializer):
    version = serializers.IntegerField(min_value=1)
    delta = serializers.FloatField(min_value=0.0)
    config = serializers.DictField(required=False, default=dict)
    entries = ManifestEntrySerializer(many=True)

    def validate_entries(self, entries):
        seen, duplicates = set(), []
        for entry in entries:
            if entry["matrix_id"] in seen:
                duplicates.append(entry["matrix_id"])
            seen.add(entry["matrix_id"])
        if duplicates:
            raise serializers.ValidationError(f"duplicate matrix ids: {duplicates}")
        return entries
