from rest_framework import serializers

from commons.serializers import StrictSerializer

LOSS_CHOICES = ("ccc", "mse")


class PredictorConfigSerializer(StrictSerializer):
    loss = serializers.ChoiceField(choices=LOSS_CHOICES, required=False)
    lr = serializers.FloatField(min_value=0.0, required=False)
    weight_decay = serializers.FloatField(min_value=0.0, required=False)
    batch_size = serializers.IntegerField(min_value=2, required=False)
    max_steps = serializers.IntegerField(min_value=1, required=False)
    eval_every = serializers.IntegerField(min_value=1, required=False)
    patience = serializers.IntegerField(min_value=1, required=False)
    val_clips = serializers.IntegerField(min_value=2, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)

    def validate_lr(self, value):
        if not value > 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value
