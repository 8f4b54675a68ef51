from rest_framework import serializers

from commons.serializers import StrictSerializer


class BackboneConfigSerializer(StrictSerializer):
    d_model = serializers.IntegerField(min_value=1, required=False)
    n_heads = serializers.IntegerField(min_value=1, required=False)
    n_layers = serializers.IntegerField(min_value=1, required=False)
    vocab_size = serializers.IntegerField(min_value=2, required=False)
    max_len = serializers.IntegerField(min_value=1, required=False)
    lara_layer = serializers.IntegerField(min_value=1, required=False, allow_null=True)

    def validate(self, attrs):
        d_model = attrs.get("d_model", 64)
        n_heads = attrs.get("n_heads", 4)
        n_layers = attrs.get("n_layers", 4)
        if d_model % n_heads:
            raise serializers.ValidationError(
                {"n_heads": f"d_model ({d_model}) must be divisible by n_heads ({n_heads})."}
            )
        lara_layer = attrs.get("lara_layer")
        if lara_layer is not None and lara_layer > n_layers:
            raise serializers.ValidationError(
                {"lara_layer": f"Must be within [1, {n_layers}], got {lara_layer}."}
            )
        return attrs


class SamplingConfigSerializer(StrictSerializer):
    temperature = serializers.FloatField(required=False)
    top_k = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_temperature(self, value):
        if not value > 0:
            raise serializers.ValidationError("Temperature must be positive.")
        return value
