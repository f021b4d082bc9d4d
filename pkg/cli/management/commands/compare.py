from cli.artifacts import config_snapshot, prepare_out_dir, write_manifest
from cli.commands import ConfigCommand
from cli.serializers import CompareSerializer, eval_source_from, protocol_from, train_config_from, train_source_from
from evaluation.reports import format_psnr, write_csv, write_json
from evaluation.services import compare_regimes


class Command(ConfigCommand):
    help = "Train nt, vat and hat denoisers on the same corpus and seed and evaluate each."
    serializer_class = CompareSerializer

    def run(self, data):
        out_dir = prepare_out_dir(data["out"], "compare")
        report = compare_regimes(
            train_source_from(data),
            eval_source_from(data),
            data["modes"],
            train_config_from(data),
            protocol_from(data),
            train_repeats=data["train_repeats"],
            out_dir=str(out_dir / "models"),
        )
        config = config_snapshot(data)
        files = [
            write_csv(report, out_dir / "report.csv"),
            write_json(report, out_dir / "report.json", metadata={"config": config, "seed": data["seed"]}),
        ]
        files.extend(sorted((out_dir / "models").iterdir()))
        write_manifest(out_dir, "compare", config, data["seed"], files)
        for row in report.rows:
            self.stdout.write(
                f"[{row.section}] eps_hat={row.eps_hat} {row.column}: "
                f"{format_psnr(row.psnr_mean)} / {format_psnr(row.psnr_std)} dB"
            )
