from rest_framework import serializers

from apps.problems.serializers import SEED_MAX


class TrainConfigSerializer(serializers.Serializer):
    epochs = serializers.IntegerField(min_value=0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(required=False)
    beta1 = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    beta2 = serializers.FloatField(min_value=0.0, max_value=1.0, required=False)
    eps = serializers.FloatField(required=False)
    validation_fraction = serializers.FloatField(min_value=0.0, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=SEED_MAX, required=False)
    gcin = serializers.DictField(required=False)
    head = serializers.DictField(required=False)

    def validate_learning_rate(self, value):
        if not value > 0:
            raise serializers.ValidationError("must be positive")
        return value

    def validate_eps(self, value):
        if not value > 0:
            raise serializers.ValidationError("must be positive")
        return value

    def validate_validation_fraction(self, value):
        if value >= 1.0:
            raise serializers.ValidationError("must be below 1")
        return value

    def _layer_sizes(self, value, keys):
        unknown = set(value) - set(keys)
        if unknown:
            raise serializers.ValidationError(f"unknown keys: {sorted(unknown)}")
        for key in keys:
            if key in value and key != "activation":
                if not isinstance(value[key], int) or value[key] < 1:
                    raise serializers.ValidationError({key: "must be a positive integer"})
        if value.get("activation", "tanh") not in ("tanh", "identity"):
            raise serializers.ValidationError({"activation": "must be 'tanh' or 'identity'"})
        return value

    def validate_gcin(self, value):
        return self._layer_sizes(value, ("layers", "hidden", "output", "activation"))

    def validate_head(self, value):
        return self._layer_sizes(value, ("hidden", "activation"))
