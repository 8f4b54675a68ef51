from rest_framework import serializers

from affect.emotion import RAW_MAX, RAW_MIN
from commons.serializers import StrictSerializer

EMOTION_SAMPLING_CHOICES = ("uniform_grid", "uniform_continuous")


class CorpusSpecSerializer(StrictSerializer):
    vocab_size = serializers.IntegerField(min_value=4, required=False)
    clip_len = serializers.IntegerField(min_value=2, required=False)
    n_clips = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    emotion_sampling = serializers.ChoiceField(
        choices=EMOTION_SAMPLING_CHOICES, required=False
    )

    def validate_vocab_size(self, value):
        if value % 2:
            raise serializers.ValidationError(
                "Vocabulary size must be even so it splits into low and high halves."
            )
        return value


class ClipRecordSerializer(StrictSerializer):
    clip_id = serializers.CharField(max_length=128)
    valence = serializers.FloatField(min_value=RAW_MIN, max_value=RAW_MAX)
    arousal = serializers.FloatField(min_value=RAW_MIN, max_value=RAW_MAX)
    tokens = serializers.CharField()
    seed = serializers.IntegerField(min_value=0)
