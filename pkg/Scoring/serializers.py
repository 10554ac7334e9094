from rest_framework import serializers

from .segmenter import SECTION_TYPES, SectionType

SPLIT_CHOICES = ['train', 'validation', 'test']
SECTION_TYPE_CHOICES = [t.value for t in SectionType]


def first_error(errors, prefix=''):
    """Return (dotted field path, message) for the first entry of a DRF error tree."""
    if isinstance(errors, dict):
        for key, value in errors.items():
            if key == 'non_field_errors':
                path = prefix or key
            else:
                path = f'{prefix}.{key}' if prefix else key
            return first_error(value, path)
        return prefix, ''
    if isinstance(errors, list):
        for position, value in enumerate(errors):
            if isinstance(value, dict):
                if value:
                    return first_error(value, f'{prefix}[{position}]')
                continue
            if isinstance(value, list):
                if value:
                    return first_error(value, prefix)
                continue
            return prefix, str(value)
        return prefix, ''
    return prefix, str(errors)


# hspim-json

class ReviewSerializer(serializers.Serializer):
    originality = serializers.IntegerField(min_value=1, max_value=5)
    soundness = serializers.IntegerField(min_value=1, max_value=5)
    comment = serializers.CharField(allow_blank=True, required=False, default='', trim_whitespace=False)


class RawSectionSerializer(serializers.Serializer):
    heading = serializers.CharField(allow_blank=True, trim_whitespace=False)
    text = serializers.CharField(source='body', allow_blank=True, trim_whitespace=False)


class PaperSerializer(serializers.Serializer):
    id = serializers.CharField()
    sections = RawSectionSerializer(many=True, source='raw_sections', allow_empty=False)
    reviews = ReviewSerializer(many=True, required=False, default=list)
    split = serializers.ChoiceField(choices=SPLIT_CHOICES, allow_null=True, required=False, default=None)


class DatasetSerializer(serializers.Serializer):
    name = serializers.CharField()
    schema_version = serializers.CharField(required=False, default='1')
    papers = PaperSerializer(many=True, allow_empty=False)


# hspim-bank-json

class QuestionBankSerializer(serializers.Serializer):
    common = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    specific = serializers.DictField(
        child=serializers.ListField(child=serializers.CharField(), allow_empty=False)
    )

    def validate_specific(self, value):
        missing = [t.value for t in SECTION_TYPES if t.value not in value]
        if missing:
            raise serializers.ValidationError(f'missing question sets for {missing}')
        unknown = sorted(set(value) - {t.value for t in SECTION_TYPES})
        if unknown:
            raise serializers.ValidationError(f'unknown section types {unknown}')
        return value


class IndividualSerializer(serializers.Serializer):
    common_index = serializers.IntegerField(min_value=0)
    specific_indices = serializers.DictField(child=serializers.IntegerField(min_value=0))

    def to_representation(self, instance):
        return {
            'common_index': instance.common_index,
            'specific_indices': {t.value: i for t, i in instance.specific_map().items()},
        }


# hspim-chunks-json

class ChunkSerializer(serializers.Serializer):
    paper_id = serializers.CharField()
    index = serializers.IntegerField(min_value=0)
    heading = serializers.CharField(allow_blank=True, trim_whitespace=False)
    body = serializers.CharField(trim_whitespace=False)
    section_type = serializers.ChoiceField(choices=SECTION_TYPE_CHOICES, allow_null=True)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        data['section_type'] = instance.section_type.value if instance.section_type else None
        return data


# hspim-scores-json

class QAPairSerializer(serializers.Serializer):
    question = serializers.CharField()
    answer = serializers.CharField()


class ChunkRecordSerializer(serializers.Serializer):
    index = serializers.IntegerField()
    heading = serializers.CharField(allow_blank=True)
    section_type = serializers.SerializerMethodField()
    scores = serializers.SerializerMethodField()
    reason = serializers.SerializerMethodField()
    qa = QAPairSerializer(allow_null=True)

    def get_section_type(self, instance):
        return instance.section_type.value

    def get_scores(self, instance):
        return instance.score.as_dict()

    def get_reason(self, instance):
        return instance.score.reason


class PaperResultSerializer(serializers.Serializer):
    paper_id = serializers.CharField()
    predicted = serializers.FloatField()
    label = serializers.FloatField(allow_null=True)
    chunks = ChunkRecordSerializer(many=True, source='records')


# Reports

class PaperErrorSerializer(serializers.Serializer):
    id = serializers.CharField()
    predicted = serializers.FloatField()
    label = serializers.FloatField()
    error = serializers.FloatField()


class EvalReportSerializer(serializers.Serializer):
    rmse = serializers.FloatField()
    mae = serializers.FloatField()
    n = serializers.IntegerField()
    mean_predicted = serializers.FloatField()
    mean_label = serializers.FloatField()
    var_predicted = serializers.FloatField()
    var_label = serializers.FloatField()
    cosine_similarity = serializers.FloatField(allow_null=True, required=False)
    bertscore = serializers.FloatField(allow_null=True, required=False)
    per_paper = PaperErrorSerializer(many=True)


class GenerationSerializer(serializers.Serializer):
    index = serializers.IntegerField()
    phase = serializers.CharField()
    best_fitness = serializers.FloatField()
    mean_fitness = serializers.FloatField()
    best_individual = IndividualSerializer()


class GARunReportSerializer(serializers.Serializer):
    strategy = serializers.CharField()
    generations = GenerationSerializer(many=True)
    best_individual = IndividualSerializer(allow_null=True)
    best_fitness = serializers.FloatField(allow_null=True)
    llm_calls = serializers.IntegerField()
