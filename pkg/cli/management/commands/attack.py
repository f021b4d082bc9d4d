from functools import partial

from cli.artifacts import config_snapshot, prepare_out_dir, write_manifest
from cli.commands import ConfigCommand
from cli.serializers import AttackConfigSerializer, attack_config_from
from cli.services.attack_dump import attack_and_dump, write_summary
from cli.services.images import load_images
from dataset.rng import SeedDomain, derive_seed
from dataset.services.corpus import synth_corpus
from denoiser.services.checkpoint import load_checkpoint


class Command(ConfigCommand):
    help = "Run the zero-mean observation attack on images and dump every intermediate image."
    serializer_class = AttackConfigSerializer

    def run(self, data):
        params = load_checkpoint(data["ckpt"])
        if data["images"]:
            images = load_images(data["images"])
        else:
            patches = synth_corpus(data["eval_count"], data["size"], derive_seed(data["seed"], SeedDomain.EVAL_CORPUS))
            images = [(f"synth_{index:03d}", patch.clean) for index, patch in enumerate(patches)]
        out_dir = prepare_out_dir(data["out"], "attack")
        summaries, written = attack_and_dump(
            params, images, data["sigma"].value, partial(attack_config_from, data), data["seed"], out_dir,
        )
        written.append(write_summary(summaries, out_dir / "summary.csv"))
        write_manifest(out_dir, "attack", config_snapshot(data), data["seed"], written)
        for s in summaries:
            self.stdout.write(
                f"{s.image}: denoised {s.psnr_denoised:.3f} dB, attacked {s.psnr_attacked:.3f} dB, "
                f"||delta|| {s.delta_norm:.4g} <= {s.rho:.4g}"
            )
