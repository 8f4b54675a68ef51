from rest_framework import serializers

from commons.serializers import StrictSerializer


class GenerationJobSerializer(StrictSerializer):
    grid = serializers.IntegerField(min_value=1, required=False)
    per_point = serializers.IntegerField(min_value=1, required=False)
    length = serializers.IntegerField(min_value=1, required=False)
    quantize = serializers.BooleanField(required=False)
