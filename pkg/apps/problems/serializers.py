import math

from rest_framework import serializers

SEED_MAX = 2**64 - 1


class DiffusionSpecSerializer(serializers.Serializer):
    dim = serializers.ChoiceField(choices=[2, 3])
    nx = serializers.IntegerField(min_value=2)
    ny = serializers.IntegerField(min_value=2)
    nz = serializers.IntegerField(min_value=1, default=1)
    bx = serializers.IntegerField(min_value=1, default=1)
    by = serializers.IntegerField(min_value=1, default=1)
    bz = serializers.IntegerField(min_value=1, default=1)
    M = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField(min_value=0, max_value=SEED_MAX, default=0)
    kappa_y_fixed = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if attrs["dim"] == 2:
            attrs["nz"], attrs["bz"] = 1, 1
        elif attrs["nz"] < 2:
            raise serializers.ValidationError({"nz": "3D problems need at least 2 cells in z"})
        errors = {}
        for cells, blocks in (("nx", "bx"), ("ny", "by"), ("nz", "bz")):
            if attrs[blocks] > attrs[cells]:
                errors[blocks] = f"must not exceed {cells}={attrs[cells]}"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class RadiationSurrogateSpecSerializer(serializers.Serializer):
    nx = serializers.IntegerField(min_value=2)
    ny = serializers.IntegerField(min_value=2)
    nz = serializers.IntegerField(min_value=2)
    bx = serializers.IntegerField(min_value=1, default=1)
    by = serializers.IntegerField(min_value=1, default=1)
    bz = serializers.IntegerField(min_value=1, default=1)
    M = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField(min_value=0, max_value=SEED_MAX, default=0)
    omega_er = serializers.FloatField(min_value=0.0)
    omega_ei = serializers.FloatField(min_value=0.0)

    def _finite(self, value):
        if not math.isfinite(value):
            raise serializers.ValidationError("coupling magnitude must be finite")
        return value

    def validate_omega_er(self, value):
        return self._finite(value)

    def validate_omega_ei(self, value):
        return self._finite(value)

    def validate(self, attrs):
        errors = {}
        for cells, blocks in (("nx", "bx"), ("ny", "by"), ("nz", "bz")):
            if attrs[blocks] > attrs[cells]:
                errors[blocks] = f"must not exceed {cells}={attrs[cells]}"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs
