from cli.artifacts import config_snapshot, prepare_out_dir, write_manifest
from cli.commands import ConfigCommand
from cli.serializers import TrainCommandSerializer, train_config_from, train_source_from
from denoiser.services.checkpoint import save_checkpoint
from training.services import train

CHECKPOINT_NAME = "model.obsd"
TRAIN_LOG_NAME = "train_log.csv"


class Command(ConfigCommand):
    help = "Train a denoiser (nt, vat or hat) and write its checkpoint and training log."
    serializer_class = TrainCommandSerializer

    def run(self, data):
        cfg = train_config_from(data)
        out_dir = prepare_out_dir(data["out"], "train")
        params, log = train(train_source_from(data).load(), cfg)
        checkpoint = save_checkpoint(params, out_dir / CHECKPOINT_NAME)
        log_path = log.write_csv(out_dir / TRAIN_LOG_NAME)
        write_manifest(out_dir, "train", config_snapshot(data), data["seed"], [checkpoint, log_path])
        last = log.rows[-1]
        self.stdout.write(
            f"Trained {cfg.mode.value} denoiser for {cfg.epochs} epoch(s): "
            f"loss {last.loss:.6g}, validation PSNR {last.psnr_val:.3f} dB"
        )
        self.stdout.write(f"Checkpoint: {checkpoint}")
