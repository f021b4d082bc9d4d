from cli.artifacts import config_snapshot, prepare_out_dir, write_manifest
from cli.commands import ConfigCommand
from cli.serializers import EvalCommandSerializer, eval_source_from, protocol_from
from denoiser.services.checkpoint import load_checkpoint
from evaluation.reports import format_psnr, write_csv, write_json
from evaluation.services import evaluate


class Command(ConfigCommand):
    help = "Evaluate a checkpoint under the PSNR protocol and write report.csv and report.json."
    serializer_class = EvalCommandSerializer

    def run(self, data):
        params = load_checkpoint(data["ckpt"])
        source = eval_source_from(data)
        report = evaluate(params, source.load(), protocol_from(data), data["seed"], corpus_name=source.name)
        out_dir = prepare_out_dir(data["out"], "eval")
        config = config_snapshot(data)
        files = [
            write_csv(report, out_dir / "report.csv"),
            write_json(report, out_dir / "report.json", metadata={"config": config, "seed": data["seed"]}),
        ]
        write_manifest(out_dir, "eval", config, data["seed"], files)
        for row in report.rows:
            self.stdout.write(
                f"{row.corpus} eps_hat={row.eps_hat} {row.column}: "
                f"{format_psnr(row.psnr_mean)} / {format_psnr(row.psnr_std)} dB"
            )
