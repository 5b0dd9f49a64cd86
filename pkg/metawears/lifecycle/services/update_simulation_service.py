"""
Analytical model of the wearable update path: BLE transfer of a payload, duty-cycled average power, battery
life, memory budget and the prototype-vs-model savings ratio.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..engine.quantization import ElementType, PayloadKind, payload_bytes
from ..exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400
BYTES_PER_KB = 1024


class MemoryBudgetExceeded(ConfigurationError):
    pass


class PowerMode(Enum):
    LOW_LATENCY = 'low_latency'
    LOW_POWER = 'low_power'


@dataclass(frozen=True)
class HardwareProfile:
    frequency_mhz: float
    active_power_mw: float
    voltage_v: float
    window_s: float
    exec_time_s: float
    mode: PowerMode
    idle_power_mw: Optional[float] = None
    battery_capacity_mah: float = 480.
    name: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'mode', PowerMode(self.mode))
        if self.window_s <= 0 or self.exec_time_s <= 0:
            raise ConfigurationError(f'Profile={self.name} window and exec time must be positive')
        if self.mode == PowerMode.LOW_LATENCY and self.exec_time_s > self.window_s:
            raise ConfigurationError(f'Profile={self.name} exec-time={self.exec_time_s}s does not fit the '
                                     f'window={self.window_s}s, not real-time')
        if self.mode == PowerMode.LOW_POWER:
            if self.exec_time_s != self.window_s:
                raise ConfigurationError(f'Low-power profile={self.name} must run for the whole window, '
                                         f'exec-time={self.exec_time_s}s window={self.window_s}s')
            if self.idle_power_mw is not None:
                raise ConfigurationError(f'Low-power profile={self.name} has no idle power')

    @property
    def duty_cycle(self) -> float:
        return self.exec_time_s / self.window_s

    def to_dict(self) -> Dict[str, Any]:
        return {**asdict(self), 'mode': self.mode.value}


@dataclass(frozen=True)
class LinkSpec:
    throughput_bps: float = 1_000_000.
    protocol_efficiency: float = 1.

    def __post_init__(self):
        if not self.throughput_bps > 0:
            raise ConfigurationError(f'Link throughput={self.throughput_bps} bps must be positive')
        if not 0 < self.protocol_efficiency <= 1:
            raise ConfigurationError(f'Link protocol-efficiency={self.protocol_efficiency} must be in (0, 1]')

    @property
    def effective_bps(self) -> float:
        return self.throughput_bps * self.protocol_efficiency


@dataclass(frozen=True)
class MemoryRegion:
    name: str
    bytes: int
    overwritable: bool = False

    def __post_init__(self):
        if self.bytes < 0:
            raise ConfigurationError(f'Memory region={self.name} cannot have negative size')


@dataclass(frozen=True)
class MemoryBudget:
    total_kb: float = 384.
    banks: int = 12
    regions: Tuple[MemoryRegion, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'regions', tuple(self.regions))
        if self.total_kb <= 0 or self.banks < 1:
            raise ConfigurationError(f'Memory total={self.total_kb} KB and banks={self.banks} must be positive')

    @property
    def total_bytes(self) -> int:
        return int(round(self.total_kb * BYTES_PER_KB))

    @property
    def bank_bytes(self) -> float:
        return self.total_bytes / self.banks


@dataclass(frozen=True)
class UpdatePayload:
    bytes: int
    kind: PayloadKind

    def __post_init__(self):
        object.__setattr__(self, 'kind', PayloadKind(self.kind))
        if self.bytes < 0:
            raise ConfigurationError(f'Payload size={self.bytes} cannot be negative')

    @classmethod
    def from_shapes(cls, kind: PayloadKind, shapes, element_type: ElementType) -> 'UpdatePayload':
        return cls(payload_bytes(kind, shapes, element_type), PayloadKind(kind))


@dataclass
class MemoryReport:
    total_bytes: int
    used_bytes: int
    regions: List[MemoryRegion]
    banks: int

    @property
    def slack_bytes(self) -> int:
        return self.total_bytes - self.used_bytes

    @property
    def fits(self) -> bool:
        return self.slack_bytes >= 0

    @property
    def banks_used(self) -> int:
        return math.ceil(self.used_bytes / (self.total_bytes / self.banks))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'total_bytes': self.total_bytes,
            'used_bytes': self.used_bytes,
            'slack_bytes': self.slack_bytes,
            'fits': self.fits,
            'banks': self.banks,
            'banks_used': self.banks_used,
            'regions': [asdict(region) for region in self.regions],
        }


def transfer_time(payload: UpdatePayload, link: LinkSpec) -> float:
    """
    :return: seconds
    """
    return payload.bytes * 8 / link.effective_bps


def avg_power(profile: HardwareProfile) -> float:
    """
    :return: milliwatts. Duty cycled between active and idle power in low-latency mode, continuous active power
        in low-power mode
    """
    if profile.mode == PowerMode.LOW_POWER or profile.exec_time_s == profile.window_s:
        return profile.active_power_mw
    if profile.idle_power_mw is None:
        raise ConfigurationError(f'Low-latency profile={profile.name} needs an idle power')
    duty_cycle = profile.duty_cycle
    return profile.active_power_mw * duty_cycle + profile.idle_power_mw * (1 - duty_cycle)


def _battery_hours(profile: HardwareProfile, power_mw: float) -> float:
    if not power_mw > 0:
        raise ConfigurationError(f'Profile={profile.name} average power={power_mw} mW must be positive')
    return profile.battery_capacity_mah * profile.voltage_v / power_mw


def battery_life_hours(profile: HardwareProfile) -> float:
    return _battery_hours(profile, avg_power(profile))


def update_savings_ratio(model: UpdatePayload, prototypes: UpdatePayload) -> float:
    if prototypes.bytes <= 0:
        raise ConfigurationError('Prototype payload must be positive to compute a savings ratio')
    return model.bytes / prototypes.bytes


def update_overhead_fraction(payload: UpdatePayload, link: LinkSpec, profile: HardwareProfile) -> float:
    return transfer_time(payload, link) / profile.exec_time_s


def transfer_energy_mj(payload: UpdatePayload, link: LinkSpec, profile: HardwareProfile) -> float:
    """
    The processor stays active while the payload comes in
    """
    return transfer_time(payload, link) * profile.active_power_mw


def battery_life_with_updates_hours(profile: HardwareProfile, payload: UpdatePayload, link: LinkSpec,
                                    updates_per_day: float) -> float:
    if updates_per_day < 0:
        raise ConfigurationError(f'updates-per-day={updates_per_day} cannot be negative')
    update_power_mw = transfer_energy_mj(payload, link, profile) * updates_per_day / SECONDS_PER_DAY
    return _battery_hours(profile, avg_power(profile) + update_power_mw)


def meets_deadline_with_update(payload: UpdatePayload, link: LinkSpec, profile: HardwareProfile) -> bool:
    return profile.exec_time_s + transfer_time(payload, link) <= profile.window_s


def check_memory(budget: MemoryBudget) -> MemoryReport:
    used = sum(region.bytes for region in budget.regions)
    report = MemoryReport(budget.total_bytes, used, list(budget.regions), budget.banks)
    if not report.fits:
        listing = ', '.join(f'{region.name}={region.bytes} B' for region in budget.regions)
        logger.warning('Memory over budget by %d bytes: %s', -report.slack_bytes, listing)
        raise MemoryBudgetExceeded(f'Memory regions need {used} B but only {budget.total_bytes} B are available '
                                   f'(over by {-report.slack_bytes} B): {listing}')
    return report


# Scenarios
# ------------------------------------------------------------------------------
@dataclass(frozen=True)
class Scenario:
    name: str
    profiles: Tuple[HardwareProfile, ...]
    link: LinkSpec = field(default_factory=LinkSpec)
    memory: MemoryBudget = field(default_factory=MemoryBudget)
    payloads: Tuple[UpdatePayload, ...] = ()
    updates_per_day: float = 24.

    def payload(self, kind: PayloadKind) -> Optional[UpdatePayload]:
        return next((payload for payload in self.payloads if payload.kind == kind), None)


def epilepsy_scenario() -> Scenario:
    return Scenario(
        name='epilepsy',
        profiles=(
            HardwareProfile(450., 50., 1.2, 12., 1.9, PowerMode.LOW_LATENCY, idle_power_mw=18.7,
                            name='epilepsy-low-latency'),
            HardwareProfile(75., 3.7, .8, 12., 12., PowerMode.LOW_POWER, name='epilepsy-low-power'),
        ),
        memory=MemoryBudget(regions=(
            MemoryRegion('input', 117_000),
            MemoryRegion('model', 29_200),
            MemoryRegion('prototypes', 64),
            MemoryRegion('intermediate', 93_000, overwritable=True),
        )),
        payloads=(
            UpdatePayload(29_200, PayloadKind.MODEL),
            UpdatePayload.from_shapes(PayloadKind.PROTOTYPES, (2, 16), ElementType.FIXED16),
        ),
    )


def af_scenario() -> Scenario:
    return Scenario(
        name='af',
        profiles=(
            HardwareProfile(450., 50., 1.2, 10., .76, PowerMode.LOW_LATENCY, idle_power_mw=18.7,
                            name='af-low-latency'),
            HardwareProfile(34.5, 1.9, .8, 10., 10., PowerMode.LOW_POWER, name='af-low-power'),
        ),
        memory=MemoryBudget(regions=(
            MemoryRegion('input', int(round(3.9 * BYTES_PER_KB))),
            MemoryRegion('model', 209 * BYTES_PER_KB),
            MemoryRegion('prototypes', 512),
            MemoryRegion('intermediate', int(round(146.5 * BYTES_PER_KB)), overwritable=True),
        )),
        payloads=(
            UpdatePayload(209 * BYTES_PER_KB, PayloadKind.MODEL),
            UpdatePayload.from_shapes(PayloadKind.PROTOTYPES, (4, 32), ElementType.FLOAT32),
        ),
    )


PRESETS = {
    'epilepsy': epilepsy_scenario,
    'af': af_scenario,
}


def get_preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError as e:
        raise ConfigurationError(f'Hardware preset={name} does not exist, use one of {sorted(PRESETS)}') from e


class UpdateSimulationServiceProvider:
    def __new__(cls):
        if not hasattr(cls, 'instance'):
            from django.conf import settings
            cls.instance = UpdateSimulationService(settings.METAWEARS_DEFAULT_PRESET)
        return cls.instance

    @classmethod
    def del_singleton(cls):
        if hasattr(cls, 'instance'):
            del cls.instance


class UpdateSimulationService:
    def __init__(self, default_preset: str = 'epilepsy'):
        self.default_preset = default_preset

    def payload_report(self, payload: UpdatePayload, link: LinkSpec, profile: HardwareProfile,
                       updates_per_day: float) -> Dict[str, Any]:
        return {
            'kind': payload.kind.value,
            'bytes': payload.bytes,
            'transfer_time_s': transfer_time(payload, link),
            'transfer_energy_mj': transfer_energy_mj(payload, link, profile),
            'overhead_fraction': update_overhead_fraction(payload, link, profile),
            'meets_deadline': meets_deadline_with_update(payload, link, profile),
            'battery_life_with_updates_hours': battery_life_with_updates_hours(profile, payload, link,
                                                                               updates_per_day),
        }

    def simulate(self, scenario: Optional[Scenario] = None) -> Dict[str, Any]:
        scenario = scenario or get_preset(self.default_preset)
        memory = check_memory(scenario.memory)
        modes = []
        for profile in scenario.profiles:
            modes.append({
                'name': profile.name,
                'mode': profile.mode.value,
                'avg_power_mw': avg_power(profile),
                'battery_life_hours': battery_life_hours(profile),
                'payloads': [self.payload_report(payload, scenario.link, profile, scenario.updates_per_day)
                             for payload in scenario.payloads],
            })
        model = scenario.payload(PayloadKind.MODEL)
        prototypes = scenario.payload(PayloadKind.PROTOTYPES)
        report = {
            'scenario': scenario.name,
            'link': asdict(scenario.link),
            'updates_per_day': scenario.updates_per_day,
            'memory': memory.to_dict(),
            'modes': modes,
            'savings_ratio': update_savings_ratio(model, prototypes) if model and prototypes else None,
        }
        logger.info('Simulated scenario=%s modes=%d savings-ratio=%s', scenario.name, len(modes),
                    report['savings_ratio'])
        return report


def format_table(report: Dict[str, Any]) -> str:
    """
    Aligned text rendering of a simulation report
    """
    header = ['profile', 'mode', 'avg_power_mw', 'battery_h', 'payload', 'bytes', 'transfer_s', 'energy_mj',
              'overhead', 'deadline', 'battery_upd_h']
    rows: List[Sequence[str]] = []
    for mode in report['modes']:
        for payload in mode['payloads']:
            rows.append([
                mode['name'], mode['mode'], f'{mode["avg_power_mw"]:.3f}', f'{mode["battery_life_hours"]:.1f}',
                payload['kind'], str(payload['bytes']), f'{payload["transfer_time_s"]:.6f}',
                f'{payload["transfer_energy_mj"]:.3f}', f'{payload["overhead_fraction"]:.4f}',
                'yes' if payload['meets_deadline'] else 'no', f'{payload["battery_life_with_updates_hours"]:.1f}',
            ])
    widths = [max(len(line[i]) for line in [header] + rows) for i in range(len(header))]
    lines = ['  '.join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip() for line in [header] + rows]
    memory = report['memory']
    lines.append('')
    lines.append(f'memory: used={memory["used_bytes"]} B total={memory["total_bytes"]} B '
                 f'slack={memory["slack_bytes"]} B banks-used={memory["banks_used"]}/{memory["banks"]}')
    if report['savings_ratio'] is not None:
        lines.append(f'savings ratio (model / prototypes): {report["savings_ratio"]:.2f}x')
    return '\n'.join(lines) + '\n'
