from rest_framework import serializers

from commons.serializers import StrictSerializer


class ProxyConfigSerializer(StrictSerializer):
    n_queries = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    n_layers = serializers.IntegerField(min_value=1, required=False)
    n_heads = serializers.IntegerField(min_value=1, required=False)
    d_model = serializers.IntegerField(min_value=1, required=False)
    d_feat = serializers.IntegerField(min_value=1, required=False)

    def validate(self, attrs):
        d_model = attrs.get("d_model", 64)
        n_heads = attrs.get("n_heads", 4)
        if d_model % n_heads:
            raise serializers.ValidationError(
                {"n_heads": f"d_model ({d_model}) must be divisible by n_heads ({n_heads})."}
            )
        return attrs


class AlignmentWeightsSerializer(StrictSerializer):
    alpha = serializers.FloatField(min_value=0.0, required=False)
