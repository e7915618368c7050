"""Step definitions for the separation CLI BDD tests."""

import io
from contextlib import redirect_stdout
from pathlib import Path
import pandas as pd
from behave import given, when, then
from app.cli import main
from tests.helpers import tiny_config, write_yaml

THIRD_SOURCE = {
    "name": "chirp",
    "synth": {"params": {"kind": "chirp", "f_start": 900.0, "f_end": 1300.0},
              "seed": 3, "duration": 0.5, "sample_rate": 8000},
}


def run_cli(context, argv):
    buffer = io.StringIO()
    try:
        with redirect_stdout(buffer):
            context.exit_code = main(argv)
    except SystemExit as e:
        context.exit_code = e.code
    context.output = buffer.getvalue()


@given('a scratch directory')
def step_scratch_directory(context):
    """Paths used by the scenario."""
    context.root = Path(context.workdir)
    context.out_dir = context.root / "out"


@given('a synth spec with {count:d} sources')
def step_synth_spec(context, count):
    sources = [s["synth"] for s in tiny_config()["sources"]][:count]
    context.config = write_yaml(context.root / "synth.yaml", {"sources": sources})
    context.command_args = ["--config", str(context.config), "--out", str(context.out_dir)]


@given('the synthesised sources')
def step_synthesised(context):
    run_cli(context, ["synth", *context.command_args])
    assert context.exit_code in (0, None), context.output


@given('a tiny experiment config')
def step_tiny_config(context):
    context.config = write_yaml(
        context.root / "tiny.yaml", tiny_config(output_dir=str(context.out_dir))
    )
    context.command_args = ["--config", str(context.config)]


@given('a tiny experiment config in "{mode}" mode with {count:d} sources')
def step_tiny_config_mode(context, mode, count):
    raw = tiny_config(mode=mode, output_dir=str(context.out_dir))
    while len(raw["sources"]) < count:
        raw["sources"].append(THIRD_SOURCE)
    context.config = write_yaml(context.root / "tiny.yaml", raw)
    context.command_args = ["--config", str(context.config)]


@when('I run the "{command}" command')
def step_run_command(context, command):
    run_cli(context, [command, *context.command_args])


@when('I evaluate the sources against themselves')
def step_evaluate_identity(context):
    wavs = [str(context.out_dir / f"source_{i}.wav") for i in range(2)]
    context.eval_dir = context.root / "eval"
    run_cli(context, ["eval", "--estimates", *wavs, "--references", *wavs,
                      "--out", str(context.eval_dir)])


@then('the command succeeds')
def step_succeeds(context):
    assert context.exit_code in (0, None), f"exit {context.exit_code}: {context.output}"


@then('the command exits with code {code:d}')
def step_exit_code(context, code):
    assert context.exit_code == code, f"exit {context.exit_code}: {context.output}"


@then('the output directory holds "{first}" and "{second}"')
def step_output_files(context, first, second):
    for name in (first, second):
        assert (context.out_dir / name).exists(), name


@then('every reported score is 300 dB')
def step_all_ceiling(context):
    scores = pd.read_csv(context.eval_dir / "scores.csv")
    for column in ("sdr_db", "sir_db", "sar_db"):
        assert (scores[column] == 300.0).all(), scores


@then('the run directory holds "{first}", "{second}" and "{third}"')
def step_run_files(context, first, second, third):
    run_dirs = list(context.out_dir.glob("df-dnn-seed*"))
    assert len(run_dirs) == 1, run_dirs
    for name in (first, second, third):
        assert (run_dirs[0] / name).exists(), name
