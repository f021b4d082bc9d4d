from django.conf import settings
from rest_framework import serializers

from attack.types import AttackConfig, StepKind, StepRule
from dataset.exceptions import InvalidNoiseSpecError
from dataset.noise import parse_noise_level
from dataset.rng import SeedDomain, derive_seed
from dataset.services.corpus import CorpusSource
from denoiser.arch import ArchConfig
from denoiser.exceptions import InvalidArchitectureError
from evaluation.exceptions import InvalidProtocolError
from evaluation.protocol import EvalProtocol, parse_columns, parse_levels
from training.config import TrainConfig, TrainingMode
from training.exceptions import InvalidTrainConfigError

MAX_SEED = 2 ** 64 - 1

# domain field names that differ from their config key
DOMAIN_KEYS = {"rho_per_pixel": "rho", "attack_iters": "train_iters", "channels_in": "channels"}


def config_key(message: str) -> str:
    """Config key of a domain validation message, which starts with the field name."""
    name = message.split(" ", 1)[0]
    return DOMAIN_KEYS.get(name, name)


class NoiseLevelField(serializers.Field):
    """A single noise level written as ``k/255`` or a decimal."""

    def to_internal_value(self, data):
        try:
            return parse_noise_level(data)
        except InvalidNoiseSpecError as e:
            raise serializers.ValidationError(str(e))

    def to_representation(self, value):
        return value.label


class NoiseLevelListField(serializers.Field):
    """Comma-separated noise levels, e.g. ``25/255,15/255``."""

    def to_internal_value(self, data):
        try:
            levels = parse_levels(data)
        except InvalidNoiseSpecError as e:
            raise serializers.ValidationError(str(e))
        if not levels:
            raise serializers.ValidationError("At least one noise level is required.")
        return levels

    def to_representation(self, value):
        return ",".join(level.label for level in value)


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: ["Unknown configuration key."] for key in unknown})
        return super().to_internal_value(data)


class SeedSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0,
                                    help_text="Root seed; every random stream derives from it")
    threads = serializers.IntegerField(min_value=1, default=settings.OBSDN_THREADS,
                                       help_text="Worker threads for attacks and evaluation cells")


class OutputSerializer(StrictSerializer):
    out = serializers.CharField(allow_blank=True, default="",
                                help_text="Output directory (blank: OBSDN_OUTPUT_DIR/<command>)")


class StepRuleSerializer(StrictSerializer):
    step_rule = serializers.ChoiceField([kind.value for kind in StepKind], default=StepKind.NORMALIZED_L2.value,
                                        help_text="Attack ascent step: normalized_l2 or raw")
    eta = serializers.FloatField(min_value=0.0, allow_null=True, default=None,
                                 help_text="Attack step size (unset: 2 * rho / iterations)")

    def check_step_rule(self, attrs):
        if attrs.get("step_rule") == StepKind.RAW.value and attrs.get("eta") is None:
            raise serializers.ValidationError({"eta": "The raw step rule needs an explicit eta."})


class PixelRangeSerializer(StrictSerializer):
    p_min = serializers.FloatField(default=0.0, help_text="Lower pixel bound for attacked observations")
    p_max = serializers.FloatField(default=1.0, help_text="Upper pixel bound for attacked observations")

    def check_pixel_range(self, attrs):
        if not attrs["p_min"] < attrs["p_max"]:
            raise serializers.ValidationError({"p_max": "p_max must be greater than p_min."})


class ArchSerializer(StrictSerializer):
    depth = serializers.IntegerField(min_value=2, default=5, help_text="Convolution layers")
    width = serializers.IntegerField(min_value=1, default=16, help_text="Hidden channels")
    kernel = serializers.IntegerField(min_value=1, default=3, help_text="Odd kernel size")
    channels = serializers.ChoiceField([1, 3], default=1, help_text="Image channels (1 gray, 3 RGB)")
    residual = serializers.BooleanField(default=True, help_text="Predict the noise and subtract it")

    def validate_kernel(self, value):
        if value % 2 == 0:
            raise serializers.ValidationError(f"Kernel size must be odd, got {value}.")
        return value


class EvalCorpusSerializer(StrictSerializer):
    size = serializers.IntegerField(min_value=3, default=32, help_text="Patch side length")
    eval_corpus = serializers.CharField(allow_blank=True, default="",
                                        help_text="Directory of PGM/PPM evaluation images (blank: procedural)")
    eval_count = serializers.IntegerField(min_value=1, default=16, help_text="Evaluation patches")


class CorpusSerializer(StrictSerializer):
    size = serializers.IntegerField(min_value=3, default=32, help_text="Patch side length")
    corpus = serializers.CharField(allow_blank=True, default="",
                                   help_text="Directory of PGM/PPM training images (blank: procedural corpus)")
    count = serializers.IntegerField(min_value=1, default=64, help_text="Training patches")


class TrainConfigSerializer(SeedSerializer, ArchSerializer, StepRuleSerializer, CorpusSerializer):
    mode = serializers.ChoiceField([mode.value for mode in TrainingMode], default=TrainingMode.NT.value,
                                   help_text="Training regime: nt, vat or hat")
    eps = NoiseLevelField(default=parse_noise_level("25/255"), help_text="Maximum training noise level")
    alpha = serializers.FloatField(min_value=0.0, default=1.0, help_text="Hybrid coefficient of hat training")
    rho = NoiseLevelField(default=parse_noise_level("5/255"),
                          help_text="Per-pixel budget rho/sqrt(m) of the training-time attack")
    train_iters = serializers.IntegerField(min_value=1, default=1, help_text="Training-time attack iterations")
    epochs = serializers.IntegerField(min_value=1, default=30, help_text="Training epochs")
    batch_size = serializers.IntegerField(min_value=1, default=4, help_text="Patches per optimizer step")
    learning_rate = serializers.FloatField(min_value=0.0, default=1e-3, help_text="Initial Adam learning rate")
    val_fraction = serializers.FloatField(min_value=0.0, max_value=0.99, default=0.125,
                                          help_text="Held-out share of the training corpus")
    val_sigma = NoiseLevelField(default=parse_noise_level("15/255"), help_text="Validation Gaussian noise level")

    def validate_eps(self, value):
        if value.value > 1.0:
            raise serializers.ValidationError(f"Noise level must lie in [0, 1], got {value.label}.")
        return value

    def validate_learning_rate(self, value):
        if value <= 0:
            raise serializers.ValidationError("Learning rate must be positive.")
        return value

    def validate(self, attrs):
        self.check_step_rule(attrs)
        try:
            train_config_from(attrs)
        except (InvalidArchitectureError, InvalidTrainConfigError) as e:
            raise serializers.ValidationError({config_key(str(e)): str(e)})
        return attrs


class EvalProtocolSerializer(SeedSerializer, StepRuleSerializer, PixelRangeSerializer):
    eps_hat = NoiseLevelListField(default=parse_levels("15/255"), help_text="Test noise levels, comma-separated")
    columns = serializers.CharField(default="gaussian,atk-5,atk-7",
                                    help_text="Report columns: gaussian, uniform, atk-R (comma-separated)")
    attack_iters = serializers.IntegerField(min_value=1, default=5, help_text="Evaluation attack iterations")
    repeats = serializers.IntegerField(min_value=1, default=3, help_text="Noise draws per cell")
    cap_energy = serializers.BooleanField(default=True, help_text="Cap base noise at its energy budget")

    def validate_columns(self, value):
        try:
            parse_columns(value)
        except InvalidProtocolError as e:
            raise serializers.ValidationError(str(e))
        return value

    def validate(self, attrs):
        self.check_step_rule(attrs)
        self.check_pixel_range(attrs)
        try:
            protocol_from(attrs)
        except InvalidProtocolError as e:
            raise serializers.ValidationError({"columns": str(e)})
        return attrs


class EvalCommandSerializer(EvalProtocolSerializer, EvalCorpusSerializer, OutputSerializer):
    ckpt = serializers.CharField(help_text="Checkpoint to evaluate")


class TrainCommandSerializer(TrainConfigSerializer, OutputSerializer):
    pass


class AttackConfigSerializer(SeedSerializer, StepRuleSerializer, PixelRangeSerializer, OutputSerializer):
    ckpt = serializers.CharField(help_text="Checkpoint to attack")
    images = serializers.CharField(allow_blank=True, default="",
                                   help_text="Image file or directory to attack (blank: procedural patches)")
    eval_count = serializers.IntegerField(min_value=1, default=4, help_text="Procedural patches when no images")
    size = serializers.IntegerField(min_value=3, default=32, help_text="Procedural patch side length")
    sigma = NoiseLevelField(default=parse_noise_level("10/255"), help_text="Gaussian noise of the observations")
    rho = NoiseLevelField(default=parse_noise_level("5/255"), help_text="Per-pixel attack budget rho/sqrt(m)")
    attack_iters = serializers.IntegerField(min_value=1, default=5, help_text="Attack iterations")

    def validate(self, attrs):
        self.check_step_rule(attrs)
        self.check_pixel_range(attrs)
        return attrs


class DenoiseSerializer(OutputSerializer):
    ckpt = serializers.CharField(help_text="Checkpoint of the denoiser")
    input = serializers.CharField(help_text="PGM/PPM file or directory to denoise")


class SweepSerializer(TrainConfigSerializer, EvalProtocolSerializer, EvalCorpusSerializer, OutputSerializer):
    axis = serializers.ChoiceField(["alpha", "rho"], default="alpha", help_text="Swept hat setting")
    grid = serializers.CharField(default="0,1,2", help_text="Comma-separated grid values")

    def validate_grid(self, value):
        points = [point.strip() for point in value.split(",") if point.strip()]
        if not points:
            raise serializers.ValidationError("Grid needs at least one value.")
        return points

    def validate(self, attrs):
        attrs = EvalProtocolSerializer.validate(self, TrainConfigSerializer.validate(self, attrs))
        for point in attrs["grid"]:
            try:
                value = float(point) if attrs["axis"] == "alpha" else parse_noise_level(point).value
            except (ValueError, InvalidNoiseSpecError):
                raise serializers.ValidationError({"grid": f"Invalid {attrs['axis']} value {point!r}."})
            if value < 0:
                raise serializers.ValidationError({"grid": f"Grid values must be >= 0, got {point!r}."})
        return attrs


class CompareSerializer(TrainConfigSerializer, EvalProtocolSerializer, EvalCorpusSerializer, OutputSerializer):
    modes = serializers.CharField(default="nt,vat,hat", help_text="Regimes to compare, comma-separated")
    train_repeats = serializers.IntegerField(min_value=1, default=1, help_text="Training runs per regime")

    def validate_modes(self, value):
        modes = [mode.strip() for mode in value.split(",") if mode.strip()]
        invalid = [mode for mode in modes if mode not in {m.value for m in TrainingMode}]
        if invalid or not modes:
            raise serializers.ValidationError(f"Modes must be drawn from nt, vat, hat; got {value!r}.")
        return modes

    def validate(self, attrs):
        return EvalProtocolSerializer.validate(self, TrainConfigSerializer.validate(self, attrs))


class SelftestSerializer(StrictSerializer):
    seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0,
                                    help_text="Seed of the random test instances")


def step_rule_from(data) -> StepRule:
    return StepRule(StepKind(data.get("step_rule", StepKind.NORMALIZED_L2.value)), data.get("eta"))


def arch_from(data) -> ArchConfig:
    return ArchConfig(
        depth=data["depth"], width=data["width"], kernel=data["kernel"],
        channels_in=data["channels"], channels_out=data["channels"], residual=data["residual"],
    )


def train_config_from(data) -> TrainConfig:
    return TrainConfig(
        mode=TrainingMode(data["mode"]),
        eps=data["eps"].value,
        alpha=data["alpha"],
        rho_per_pixel=data["rho"].value,
        attack_iters=data["train_iters"],
        step_rule=step_rule_from(data),
        epochs=data["epochs"],
        batch_size=data["batch_size"],
        learning_rate=data["learning_rate"],
        seed=data["seed"],
        arch=arch_from(data),
        val_fraction=data["val_fraction"],
        val_sigma=data["val_sigma"].value,
        threads=data["threads"],
    )


def protocol_from(data) -> EvalProtocol:
    return EvalProtocol(
        eps_hats=data["eps_hat"],
        columns=data["columns"],
        attack_iters=data["attack_iters"],
        step_rule=step_rule_from(data),
        p_min=data["p_min"],
        p_max=data["p_max"],
        repeats=data["repeats"],
        cap_energy=data["cap_energy"],
        threads=data["threads"],
    )


def attack_config_from(data, m: int) -> AttackConfig:
    return AttackConfig.per_pixel(
        data["rho"].value, m,
        iters=data["attack_iters"], step_rule=step_rule_from(data), p_min=data["p_min"], p_max=data["p_max"],
    )


def train_source_from(data) -> CorpusSource:
    if data.get("corpus"):
        return CorpusSource(kind="dir", path=data["corpus"], count=data["count"], size=data["size"],
                            seed=data["seed"])
    return CorpusSource(count=data["count"], size=data["size"], seed=data["seed"])


def eval_source_from(data) -> CorpusSource:
    seed = derive_seed(data["seed"], SeedDomain.EVAL_CORPUS)
    if data.get("eval_corpus"):
        return CorpusSource(kind="dir", path=data["eval_corpus"], count=data["eval_count"], size=data["size"],
                            seed=seed)
    return CorpusSource(count=data["eval_count"], size=data["size"], seed=seed, name="synth-eval")
