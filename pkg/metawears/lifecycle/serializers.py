from collections.abc import Mapping

from rest_framework import serializers
from rest_framework.exceptions import ValidationError

from .engine.encoder import Activation
from .engine.quantization import ElementType, PayloadKind
from .services.update_simulation_service import PRESETS, PowerMode

MAX_SEED = 2 ** 64 - 1


class StrictSerializer(serializers.Serializer):
    """
    Serializer refusing keys it does not declare
    """
    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


def enum_choices(enum_class):
    return [element.value for element in enum_class]


# ================================================ #
#            Dataset generation
# ================================================ #
class DomainSerializer(StrictSerializer):
    fs = serializers.FloatField(min_value=1.)
    noise_std = serializers.FloatField(min_value=0., required=False)
    gain = serializers.FloatField(required=False)
    burst_freq_shift = serializers.FloatField(required=False)

    def validate_gain(self, value):
        if value <= 0:
            raise ValidationError('Gain must be positive')
        return value


class DomainsSerializer(StrictSerializer):
    base = DomainSerializer(required=False)
    target = DomainSerializer(required=False)
    new = DomainSerializer(required=False)
    test = DomainSerializer(required=False)


class PatientsSerializer(StrictSerializer):
    base = serializers.IntegerField(min_value=1, required=False)
    target = serializers.IntegerField(min_value=1, required=False)
    new = serializers.IntegerField(min_value=1, required=False)
    test = serializers.IntegerField(min_value=1, required=False)


class GenerationSerializer(StrictSerializer):
    duration_s = serializers.FloatField(required=False)
    records_per_patient_per_class = serializers.IntegerField(min_value=1, required=False)
    patients = PatientsSerializer(required=False)
    domains = DomainsSerializer(required=False)

    def validate_duration_s(self, value):
        if value <= 0:
            raise ValidationError('Duration must be positive')
        return value


class DatasetPathsSerializer(StrictSerializer):
    base = serializers.CharField(required=False)
    target = serializers.CharField(required=False)
    new = serializers.CharField(required=False)
    test = serializers.CharField(required=False)


# ================================================ #
#            Preprocessing
# ================================================ #
class BandpassSerializer(StrictSerializer):
    low_hz = serializers.FloatField(min_value=0.)
    high_hz = serializers.FloatField(min_value=0.)
    order = serializers.IntegerField(min_value=2, required=False)

    def validate(self, data):
        if data['low_hz'] >= data['high_hz']:
            raise ValidationError(f'Band-pass low-hz={data["low_hz"]} must be below high-hz={data["high_hz"]}')
        if data.get('order', 4) % 2:
            raise ValidationError(f'Band-pass order={data["order"]} must be even')
        return data


class NotchSerializer(StrictSerializer):
    center_hz = serializers.FloatField(min_value=0.)
    quality_q = serializers.FloatField(min_value=0., required=False)


class StftSerializer(StrictSerializer):
    window_s = serializers.FloatField(required=False)
    overlap_samples = serializers.IntegerField(min_value=0, required=False)
    freq_res_hz = serializers.FloatField(required=False)


class PreprocessSerializer(StrictSerializer):
    target_fs = serializers.FloatField(min_value=1., required=False)
    bandpass = BandpassSerializer(required=False, allow_null=True)
    notch = NotchSerializer(required=False, allow_null=True)
    stft = StftSerializer(required=False)
    normalize = serializers.BooleanField(required=False)


class AugmentationSerializer(StrictSerializer):
    enabled = serializers.BooleanField(required=False)
    noise_fraction = serializers.FloatField(min_value=0., max_value=1., required=False)
    noise_scale = serializers.FloatField(min_value=0., required=False)


# ================================================ #
#            Training
# ================================================ #
class EncoderSerializer(StrictSerializer):
    hidden_layers = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1,
                                          required=False)
    feature_dim = serializers.IntegerField(min_value=1, required=False)
    activation = serializers.ChoiceField(choices=enum_choices(Activation), required=False)


class EpisodeSerializer(StrictSerializer):
    n_support_patients = serializers.IntegerField(min_value=1, required=False)
    n_query_patients = serializers.IntegerField(min_value=1, required=False)
    k = serializers.IntegerField(min_value=1, required=False)
    m = serializers.IntegerField(min_value=1, required=False)


class TrainSerializer(StrictSerializer):
    episodes_per_epoch = serializers.IntegerField(min_value=1, required=False)
    max_epochs = serializers.IntegerField(min_value=1, required=False)
    patience = serializers.IntegerField(min_value=1, required=False)
    lr = serializers.FloatField(min_value=0., required=False)
    momentum = serializers.FloatField(min_value=0., required=False)
    validation_fraction = serializers.FloatField(required=False)
    validation_episodes = serializers.IntegerField(min_value=1, required=False)

    def validate_momentum(self, value):
        if value >= 1:
            raise ValidationError('Momentum must be in [0, 1)')
        return value

    def validate_validation_fraction(self, value):
        if not 0 < value < 1:
            raise ValidationError('Validation fraction must be in (0, 1)')
        return value


class EvaluationSerializer(StrictSerializer):
    iterations = serializers.IntegerField(min_value=1, required=False)
    deploy_k = serializers.IntegerField(min_value=1, required=False)
    k_values = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1, required=False)
    ablation_runs = serializers.IntegerField(min_value=1, required=False)


class QuantizationSerializer(StrictSerializer):
    frac_bits = serializers.IntegerField(min_value=1, max_value=15, required=False)


class PrototypeFileSerializer(StrictSerializer):
    element_type = serializers.ChoiceField(choices=[element.label for element in ElementType], required=False)


# ================================================ #
#            Hardware scenario
# ================================================ #
class HardwareProfileSerializer(StrictSerializer):
    name = serializers.CharField(required=False, allow_blank=True)
    mode = serializers.ChoiceField(choices=enum_choices(PowerMode))
    frequency_mhz = serializers.FloatField(min_value=0.)
    active_power_mw = serializers.FloatField(min_value=0.)
    idle_power_mw = serializers.FloatField(min_value=0., required=False, allow_null=True)
    voltage_v = serializers.FloatField(min_value=0.)
    window_s = serializers.FloatField(min_value=0.)
    exec_time_s = serializers.FloatField(min_value=0.)
    battery_capacity_mah = serializers.FloatField(min_value=0., required=False)

    def validate(self, data):
        if data['mode'] == PowerMode.LOW_LATENCY.value and data.get('idle_power_mw') is None:
            raise ValidationError('Low-latency profiles need idle_power_mw')
        return data


class LinkSerializer(StrictSerializer):
    throughput_bps = serializers.FloatField(required=False)
    protocol_efficiency = serializers.FloatField(required=False)


class MemoryRegionSerializer(StrictSerializer):
    name = serializers.CharField()
    bytes = serializers.IntegerField(min_value=0)
    overwritable = serializers.BooleanField(required=False)


class MemorySerializer(StrictSerializer):
    total_kb = serializers.FloatField(required=False)
    banks = serializers.IntegerField(min_value=1, required=False)
    regions = MemoryRegionSerializer(many=True, required=False)


class PayloadSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=enum_choices(PayloadKind))
    bytes = serializers.IntegerField(min_value=0, required=False)
    shapes = serializers.ListField(child=serializers.ListField(child=serializers.IntegerField(min_value=0),
                                                               min_length=2, max_length=2),
                                   required=False)
    element_type = serializers.ChoiceField(choices=[element.label for element in ElementType], required=False)

    def validate(self, data):
        if ('bytes' in data) == ('shapes' in data):
            raise ValidationError('Payload needs exactly one of bytes or shapes')
        if 'shapes' in data and 'element_type' not in data:
            raise ValidationError('Payload shapes need an element_type')
        if data['kind'] == PayloadKind.PROTOTYPES.value and len(data.get('shapes', [()])) != 1:
            raise ValidationError('Prototype payloads take a single [n_classes, feature_dim] shape')
        return data


class ScenarioSerializer(StrictSerializer):
    """
    A preset name, a custom description or a preset with some sections overridden. `hardware` takes one profile
    or a list of them
    """
    preset = serializers.ChoiceField(choices=sorted(PRESETS), required=False)
    name = serializers.CharField(required=False)
    hardware = HardwareProfileSerializer(many=True, required=False)
    link = LinkSerializer(required=False)
    memory = MemorySerializer(required=False)
    payloads = PayloadSerializer(many=True, required=False)
    updates_per_day = serializers.FloatField(min_value=0., required=False)

    def to_internal_value(self, data):
        if isinstance(data, Mapping) and isinstance(data.get('hardware'), Mapping):
            data = {**data, 'hardware': [data['hardware']]}
        return super().to_internal_value(data)

    def validate(self, data):
        if 'preset' not in data and 'hardware' not in data:
            raise ValidationError('Scenario needs a preset or a hardware section')
        if 'hardware' in data and not data['hardware']:
            raise ValidationError({'hardware': ['At least one profile is required.']})
        return data


# ================================================ #
#            Run configuration
# ================================================ #
class RunConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, required=False)
    out = serializers.CharField(required=False)
    classes = serializers.ListField(child=serializers.CharField(), min_length=2, required=False)
    datasets = DatasetPathsSerializer(required=False)
    generation = GenerationSerializer(required=False)
    preprocess = PreprocessSerializer(required=False)
    augmentation = AugmentationSerializer(required=False)
    encoder = EncoderSerializer(required=False)
    episode = EpisodeSerializer(required=False)
    pretrain = TrainSerializer(required=False)
    finetune = TrainSerializer(required=False)
    evaluation = EvaluationSerializer(required=False)
    quantization = QuantizationSerializer(required=False)
    prototypes = PrototypeFileSerializer(required=False)
    hardware = ScenarioSerializer(required=False)

    def validate_classes(self, value):
        if len(set(value)) != len(value):
            raise ValidationError(f'Duplicated class names in {value}')
        return value


class SampleSerializer(StrictSerializer):
    """
    Raw recording given to `infer`
    """
    fs = serializers.FloatField()
    samples = serializers.ListField(child=serializers.FloatField(), min_length=1)

    def validate_fs(self, value):
        if value <= 0:
            raise ValidationError('Sampling rate must be positive')
        return value
