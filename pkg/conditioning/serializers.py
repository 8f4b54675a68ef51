from rest_framework import serializers

from commons.serializers import StrictSerializer


class ConditioningConfigSerializer(StrictSerializer):
    text_tokens = serializers.IntegerField(min_value=0, required=False)
    av_hidden = serializers.IntegerField(min_value=1, required=False)
