"""
Command-line entry points.

Every command loads and validates its configuration before touching the filesystem. Exit
codes: 0 on success, 1 for configuration or usage errors, 2 for failures while running.
"""
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from srnpose import diffcore as dc
from srnpose.cli.config import RunConfig, load_config
from srnpose.cli.plots import plot_curves
from srnpose.cli.report import EVAL_DIR, aligned_text, merge_runs
from srnpose.constants.constants import (
    CURVES_PLOT_FILE,
    EXIT_OK,
    EXIT_RUNTIME,
    EXIT_VALIDATION,
    INTRINSICS_FILE,
    LOSS_CURVE_FILE,
    SUMMARY_FILE,
    SUMMARY_TEXT_FILE,
)
from srnpose.constants.messages import ErrorMessages
from srnpose.data.checkpoint import load_checkpoint, save_checkpoint
from srnpose.data.dataset_io import load_dataset, read_image, read_intrinsics, read_pose, save_dataset
from srnpose.data.scene import SphereRandom, SphericalSpiral, generate_instances, random_scene_spec
from srnpose.errors import ConfigError, SrnPoseError
from srnpose.generalize import (
    AdaptationResult,
    finetune_embedding,
    load_adaptation,
    mean_embedding_baseline,
    random_embedding_baseline,
    save_adaptation,
)
from srnpose.geometry import Intrinsics, Pose6DoF, matrix_to_pose
from srnpose.poser.evaluate import evaluate as run_evaluation, query_cases, write_evaluation
from srnpose.poser.init_poses import make_strategy
from srnpose.poser.losses import LossKind
from srnpose.poser.refine import estimate_pose
from srnpose.renderer.model import SigmaSrnModel
from srnpose.renderer.train import TrainResult, train as run_training

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = 'model.ckpt'
ADAPTATION_FILE = 'adaptation.json'
POSE_FILE = 'pose.json'
TRAJECTORY_FILE = 'trajectory.csv'
REPORT_FILE = 'report.csv'
REPORT_TEXT_FILE = 'report.txt'
NOVEL_SEED_OFFSET = 10_000


def _progress() -> bool:
    return sys.stderr.isatty()


def _tag(config: RunConfig) -> dict:
    return {'config_digest': config.digest(), 'seed': config.seed}


def _loss_kind(config: RunConfig, name: str | None = None) -> LossKind:
    return LossKind(name or config.estimation.loss, config.estimation.contrast)


config_option = click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                             help='TOML file of dotted keys.')
set_option = click.option('--set', 'overrides', multiple=True, metavar='KEY=VALUE',
                          help='Override one config key; may be repeated. Wins over --config.')


@click.group()
@click.option('--log-level', default=lambda: os.getenv('SRNPOSE_LOG_LEVEL', 'INFO'), show_default='INFO')
@click.option('--precision', default=lambda: os.getenv('SRNPOSE_PRECISION', 'float64'),
              type=click.Choice(['float64', 'float32']), show_default='float64')
def cli(log_level: str, precision: str) -> None:
    """Pose estimation by inverting a learned scene renderer."""
    logging.basicConfig(level=log_level.upper(), format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    dc.set_precision(precision)


@cli.command('gen-data')
@config_option
@set_option
def gen_data(config_path, overrides) -> None:
    """Generate train (random sphere) and test (spiral) datasets, plus an unseen instance."""
    config = load_config(config_path, overrides)
    data = config.data
    K = Intrinsics.square(data.image_size, data.focal_ratio)
    rng = np.random.default_rng(config.seed)
    specs = [random_scene_spec(rng, data.primitives) for _ in range(data.instances)]
    novel = [random_scene_spec(rng, data.primitives) for _ in range(data.novel_instances)]

    splits = [
        (data.train_dir, generate_instances(specs, data.train_views, data.radius, SphereRandom(config.seed), K)),
        (data.test_dir, generate_instances(specs, data.test_views, data.radius, SphericalSpiral(data.spiral_turns), K)),
    ]
    if novel:
        observe = SphereRandom(config.seed + NOVEL_SEED_OFFSET)
        splits.append((data.novel_obs_dir, generate_instances(novel, config.adapt.shots, data.radius, observe, K)))
        splits.append((data.novel_test_dir,
                       generate_instances(novel, data.test_views, data.radius, SphericalSpiral(data.spiral_turns), K)))
    for path, dataset in splits:
        dataset.meta.update(_tag(config))
        save_dataset(dataset, path)
        click.echo(f"wrote {dataset.view_count} views to {path}")


@cli.command()
@config_option
@set_option
@click.option('--resume', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Checkpoint to continue training from.')
def train(config_path, overrides, resume) -> None:
    """Train the renderer; writes model.ckpt and loss_curve.csv to output_dir."""
    config = load_config(config_path, overrides)
    config.require_path('data.train_dir')
    dataset = load_dataset(config.data.train_dir)
    if (dataset.intrinsics.height, dataset.intrinsics.width) != config.model.image_hw: raise ConfigError(
        ErrorMessages.BAD_VALUE.format(key='model.image_hw', reason=f'dataset images are '
                                       f'{dataset.intrinsics.height}x{dataset.intrinsics.width}'))
    if resume:
        model, state = load_checkpoint(resume)
    else:
        model, state = SigmaSrnModel.initialize(config.model, len(dataset.instances), config.seed), None
    training = config.training
    result: TrainResult = run_training(dataset, model, training.epochs, training.lr, training.batch,
                                       training.latent_weight, config.seed, state,
                                       training.max_steps or None, progress=_progress())

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, out / CHECKPOINT_FILE, result.state)
    first_epoch = result.state.epochs_done - len(result.history)
    curve = pd.DataFrame({'epoch': range(first_epoch, result.state.epochs_done), 'loss': result.history})
    curve_path = out / LOSS_CURVE_FILE
    curve.to_csv(curve_path, index=False, mode='a' if resume and curve_path.exists() else 'w',
                 header=not (resume and curve_path.exists()))
    (out / 'train_manifest.json').write_text(json.dumps({
        **_tag(config), 'step_count': result.state.step_count, 'epochs_done': result.state.epochs_done,
        'config': config.to_dict()}, indent=2))
    click.echo(f"trained {len(result.history)} epoch(s), step {result.state.step_count}; {out / CHECKPOINT_FILE}")


@cli.command()
@config_option
@set_option
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--obs-dir', type=click.Path(exists=True, file_okay=False), default=None,
              help='Dataset holding the observations; data.novel_obs_dir by default.')
def finetune(config_path, overrides, checkpoint, obs_dir) -> None:
    """Fit an embedding for an unseen instance; writes adaptation.json."""
    config = load_config(config_path, overrides)
    obs_dir = obs_dir or config.require_path('data.novel_obs_dir')
    model, state = load_checkpoint(checkpoint)
    dataset = load_dataset(obs_dir)
    views = dataset.instances[0].views[:config.adapt.shots]
    steps = None if config.adapt.steps < 0 else config.adapt.steps
    adaptation = finetune_embedding(model, [(v.image, v.pose) for v in views], dataset.intrinsics, steps,
                                    config.adapt.lr, base_steps=state.step_count)
    out = Path(config.output_dir)
    save_adaptation(adaptation, model, out / ADAPTATION_FILE)
    click.echo(f"adapted embedding from {len(views)} observation(s): "
               f"loss {adaptation.fit_loss_history[0]:.6g} -> {adaptation.fit_loss_history[-1]:.6g}")


def _read_reference(path: str) -> Pose6DoF:
    path = Path(path)
    if path.suffix == '.json':
        record = json.loads(path.read_text())
        return Pose6DoF(record['theta_rad'], record['t'])
    return matrix_to_pose(read_pose(path, 0))


@cli.command()
@config_option
@set_option
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--image', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--instance', type=int, default=0, show_default=True)
@click.option('--reference-pose', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Pose file (16 numbers) or pose JSON; required by neighbor4.')
@click.option('--adaptation', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Sidecar from finetune; estimates with the adapted embedding.')
@click.option('--intrinsics', type=click.Path(exists=True, dir_okay=False), default=None,
              help='intrinsics.txt of the query; the training set\'s by default.')
def estimate(config_path, overrides, checkpoint, image, instance, reference_pose, adaptation, intrinsics) -> None:
    """Estimate the camera pose of one image; writes pose.json and trajectory.csv."""
    config = load_config(config_path, overrides)
    if config.estimation.strategy == 'neighbor4' and reference_pose is None: raise click.UsageError(
        ErrorMessages.NEED_REFERENCE + " (--reference-pose)")
    K = read_intrinsics(Path(intrinsics) if intrinsics else config.require_path('data.train_dir') / INTRINSICS_FILE)
    model, _ = load_checkpoint(checkpoint)
    if adaptation:
        adapted = load_adaptation(adaptation, model)
        model, instance = adapted.extend(model), adapted.instance_handle
    reference = _read_reference(reference_pose) if reference_pose else None
    strategy = make_strategy(config.estimation.strategy, config.data.radius, reference, config.estimation.offset_deg)
    est = config.estimation
    result = estimate_pose(read_image(Path(image), K), K, instance, model, strategy, est.steps, _loss_kind(config),
                           est.batch, est.lr)

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {**result.pose.to_dict(), 'final_loss': result.final_loss, 'strategy': est.strategy,
              'loss_kind': est.loss, 'lanes': len(result.trajectories), 'winner': result.winner, **_tag(config)}
    (out / POSE_FILE).write_text(json.dumps(record, indent=2, sort_keys=True))
    rows = [row for trajectory in result.trajectories for row in trajectory.rows()]
    pd.DataFrame(rows).to_csv(out / TRAJECTORY_FILE, index=False)
    click.echo(json.dumps(record, indent=2, sort_keys=True))


def _embeddings(model: SigmaSrnModel, adaptation: str | None, baselines: bool, seed: int) -> list[tuple[str, AdaptationResult | None]]:
    if adaptation is None:
        return [('trained', None)]
    rows = [('adapted', load_adaptation(adaptation, model))]
    if baselines:
        rows.append(('mean', mean_embedding_baseline(model)))
        rows.append(('random', random_embedding_baseline(model, np.random.default_rng(seed))))
    return rows


@cli.command()
@config_option
@set_option
@click.option('--checkpoint', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--test-dir', type=click.Path(file_okay=False), default=None,
              help='Test dataset; data.test_dir by default.')
@click.option('--adaptation', type=click.Path(exists=True, dir_okay=False), default=None,
              help='Evaluate an unseen instance with this adapted embedding.')
@click.option('--baselines/--no-baselines', default=False,
              help='With --adaptation, also score the mean and a random embedding.')
@click.option('--plot/--no-plot', default=True, help='Write curves.svg next to the curve CSVs.')
def evaluate(config_path, overrides, checkpoint, test_dir, adaptation, baselines, plot) -> None:
    """Score every (strategy, loss) pair in evaluation.* over the test set."""
    config = load_config(config_path, overrides)
    test_dir = Path(test_dir) if test_dir else config.require_path('data.test_dir')
    if not test_dir.is_dir(): raise ConfigError(ErrorMessages.MISSING_PATH.format(key='--test-dir', path=test_dir))
    dataset = load_dataset(test_dir)
    if adaptation:
        dataset = dataset.subset(0, range(len(dataset.instances[0].views)))
    cases = query_cases(dataset, config.evaluation.per_instance, config.evaluation.instances)
    if not cases: raise ConfigError(ErrorMessages.EMPTY_TEST_DIR.format(path=test_dir))
    base, _ = load_checkpoint(checkpoint)

    out = Path(config.output_dir) / EVAL_DIR
    summaries, curves = [], {}
    est = config.estimation
    for label, adapted in _embeddings(base, adaptation, baselines, config.seed):
        model = adapted.extend(base) if adapted else base
        index = adapted.instance_handle if adapted else None
        for strategy in config.evaluation.strategies:
            for loss in config.evaluation.losses:
                name = f"{label}_{strategy}_{loss}" if adaptation else f"{strategy}_{loss}"
                result = run_evaluation(model, cases, dataset.intrinsics, strategy, _loss_kind(config, loss),
                                        est.steps, est.lr, est.batch, config.data.radius, est.offset_deg,
                                        config.seed, est.workers, _progress(), index_override=index)
                extra = {'embedding': label, **_tag(config)}
                write_evaluation(result, out / name, extra)
                summaries.append({**result.summary(), **extra})
                curves[name] = result.curves()

    table = pd.DataFrame(summaries)
    table.to_csv(out / SUMMARY_FILE, index=False)
    (out / SUMMARY_TEXT_FILE).write_text(aligned_text(table))
    if plot:
        plot_curves(curves, out / CURVES_PLOT_FILE)
    click.echo(aligned_text(table))


@cli.command()
@click.argument('run_dirs', nargs=-1, type=click.Path())
@click.option('--out', type=click.Path(file_okay=False), default='report', show_default=True)
def report(run_dirs, out) -> None:
    """Merge the summaries of several evaluation runs into one table."""
    table = merge_runs(run_dirs)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / REPORT_FILE, index=False)
    (out / REPORT_TEXT_FILE).write_text(aligned_text(table))
    click.echo(aligned_text(table))


def main(argv=None) -> int:
    """Run the CLI and map failures onto exit codes."""
    try:
        cli.main(args=argv, prog_name='srnpose', standalone_mode=False)
    except (ConfigError, click.UsageError, click.BadParameter) as e:
        logging.error(f"Invalid configuration or usage: {e}")
        click.echo(f"error: {e}", err=True)
        return EXIT_VALIDATION
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return EXIT_VALIDATION
    except click.exceptions.Abort:
        return EXIT_RUNTIME
    except (SrnPoseError, OSError, ValueError) as e:
        logging.error(f"Error in srnpose: {e}")
        click.echo(f"error: {e}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK
