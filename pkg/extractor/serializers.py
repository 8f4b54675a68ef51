from rest_framework import serializers

from commons.serializers import StrictSerializer


class WindowConfigSerializer(StrictSerializer):
    window_tokens = serializers.IntegerField(min_value=1, required=False)
    stride_tokens = serializers.IntegerField(min_value=1, required=False)

    def validate(self, attrs):
        window = attrs.get("window_tokens", 32)
        stride = attrs.get("stride_tokens", 32)
        if stride < window:
            raise serializers.ValidationError(
                {"stride_tokens": f"Stride ({stride}) must be at least the window length ({window})."}
            )
        return attrs
