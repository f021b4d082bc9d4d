from cli.artifacts import config_snapshot, prepare_out_dir, write_manifest
from cli.commands import ConfigCommand
from cli.serializers import DenoiseSerializer
from cli.services.images import load_images
from denoiser.services.checkpoint import load_checkpoint
from denoiser.services.network import denoise
from dataset.utils.netpbm import write_image


class Command(ConfigCommand):
    help = "Denoise one PGM/PPM file or every image of a directory."
    serializer_class = DenoiseSerializer

    def run(self, data):
        params = load_checkpoint(data["ckpt"])
        images = load_images(data["input"])
        out_dir = prepare_out_dir(data["out"], "denoise")
        written = []
        for name, y in images:
            suffix = "ppm" if y.shape[0] == 3 else "pgm"
            written.append(write_image(out_dir / f"{name}_denoised.{suffix}", denoise(params, y)))
        write_manifest(out_dir, "denoise", config_snapshot(data), None, written)
        self.stdout.write(f"Denoised {len(written)} image(s) into {out_dir}")
