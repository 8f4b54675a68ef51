from collections.abc import Mapping

from rest_framework import serializers


class StrictSerializer(serializers.Serializer):
    """
    Serializer that rejects keys it does not declare.

    Configuration sections are parsed from text, so a misspelt key would
    otherwise silently fall back to its default.
    """

    def to_internal_value(self, data):
        if not isinstance(data, Mapping):
            raise serializers.ValidationError(
                {"non_field_errors": f"Expected an object of settings, got {type(data).__name__}."}
            )
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError(
                {key: "Unknown configuration key." for key in unknown}
            )
        return super().to_internal_value(data)


def load_section(serializer_class, data, target):
    """Validate `data` with `serializer_class` and build `target` from it."""
    serializer = serializer_class(data=dict(data or {}))
    serializer.is_valid(raise_exception=True)
    return target(**serializer.validated_data)
