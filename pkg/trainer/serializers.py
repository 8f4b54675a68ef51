from rest_framework import serializers

from commons.serializers import StrictSerializer


class TrainConfigSerializer(StrictSerializer):
    alpha = serializers.FloatField(min_value=0.0, required=False)
    steps = serializers.IntegerField(min_value=1, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    lr = serializers.FloatField(min_value=0.0, required=False)
    weight_decay = serializers.FloatField(min_value=0.0, required=False)
    grad_clip = serializers.FloatField(min_value=0.0, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    lara_layer = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    eval_every = serializers.IntegerField(min_value=1, required=False)
    val_fraction = serializers.FloatField(min_value=0.0, max_value=0.5, required=False)
    save_every = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    feature_cache = serializers.CharField(required=False, allow_null=True, allow_blank=False)
    proxy = serializers.BooleanField(required=False)

    def validate_lr(self, value):
        if not value > 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate(self, attrs):
        if attrs.get("alpha", 100.0) > 0 and attrs.get("proxy") is False:
            raise serializers.ValidationError(
                {"proxy": "The alignment term needs the proxy network; set alpha = 0 to disable it."}
            )
        return attrs
