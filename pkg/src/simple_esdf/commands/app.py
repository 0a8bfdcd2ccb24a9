from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List

import typer
from rich.console import Console
from rich.table import Table

from simple_esdf.constants.constants import Objective
from simple_esdf.constants.system import ExitCode, SystemConstants
from simple_esdf.commands import pipeline
from simple_esdf.events import read_event_log
from simple_esdf.metrics.compare import render_comparison
from simple_esdf.metrics.report import render_report
from simple_esdf.utils.config_manager import ConfigManager
from simple_esdf.utils.errors import ConfigError, EsdfError, NumericalError
from simple_esdf.utils.logging_config import get_logger, setup_logging
from simple_esdf.utils.run_config import RunConfig

app = typer.Typer(help="全空间延迟反馈转化率建模工具箱", no_args_is_help=True)
console = Console()
logger = get_logger(__name__)

ConfigOption = typer.Option(None, "--config", "-c", help="扁平 SECTION.KEY=value 配置文件.")
SetOption = typer.Option(None, "--set", help="覆盖任意配置项，如 --set TRAIN.EPOCHS=3，可重复.")
LogDirOption = typer.Option(None, "--log-dir", help="日志目录，缺省时只输出到控制台.")
VerboseOption = typer.Option(False, "--verbose", "-v", help="输出 DEBUG 日志.")


def _exit_code(error: EsdfError) -> ExitCode:
    if isinstance(error, ConfigError):
        return ExitCode.USAGE
    if isinstance(error, NumericalError):
        return ExitCode.NUMERICAL
    # DataError / InputError / InvariantError / UndefinedMetricError
    return ExitCode.DATA


@contextmanager
def _command(
    config: Path | None,
    sets: List[str] | None,
    log_dir: Path | None,
    verbose: bool,
    **flags,
) -> Iterator[RunConfig]:
    """
    初始化日志与配置（默认值 < 配置文件 < 命令行），并把工具箱异常映射为退出码.
    """
    overrides = [f"{key}={value}" for key, value in flags.items() if value is not None]
    overrides += list(sets or [])
    try:
        ConfigManager.reset_instance()
        manager = ConfigManager.get_instance(config_file=config, overrides=overrides)
        rc = RunConfig.from_manager(manager)
        setup_logging(log_dir if log_dir is not None else rc.log_dir, "DEBUG" if verbose else "INFO")
        yield rc
    except EsdfError as e:
        code = _exit_code(e)
        logger.error("[CLI] %s: %s", type(e).__name__, e)
        console.print(f"[red]错误[/red] ({type(e).__name__}): {e}")
        raise typer.Exit(code=int(code)) from None
    except typer.Exit:
        raise
    except Exception as e:
        # 工具箱之外的异常带堆栈记录，按数据错误退出
        logger.error_exc("[CLI] 未预期的错误: %s", e)
        console.print(f"[red]错误[/red] ({type(e).__name__}): {e}")
        raise typer.Exit(code=int(ExitCode.DATA)) from None


@app.command()
def generate(
    n: int = typer.Option(..., "--n", help="曝光数."),
    out: Path = typer.Option(Path("data"), "--out", "-o", help="输出目录."),
    seed: int | None = typer.Option(None, "--seed", help="随机种子."),
    workers: int | None = typer.Option(None, "--workers", help="生成线程数，不影响输出."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    生成合成事件日志与真值文件.
    """
    with _command(
        config, sets, log_dir, verbose,
        **{"GENERATOR.N_IMPRESSIONS": n, "SEED": seed, "GENERATOR.N_WORKERS": workers},
    ) as rc:
        stats = pipeline.run_generate(rc, out)
        table = Table(title="生成摘要")
        table.add_column("项")
        table.add_column("值", justify="right")
        table.add_row("曝光", str(stats["impressions"]))
        table.add_row("点击率", f"{stats['click_rate']:.4f}")
        table.add_row("转化率 (点击后)", f"{stats['conversion_rate']:.4f}")
        for k, value in enumerate(stats["delay_histogram"]):
            table.add_row(f"延迟槽 {k}", f"{value:.4f}")
        console.print(table)


@app.command("snapshot")
def snapshot_cmd(
    log: Path = typer.Option(Path("data") / SystemConstants.EVENT_LOG_FILE, "--log", help="事件日志."),
    out: Path = typer.Option(Path("data") / "snapshot.tsv", "--out", "-o", help="快照文件."),
    policy: str | None = typer.Option(None, "--policy", help="标签策略."),
    observe_ts: int | None = typer.Option(None, "--observe-ts", help="观测时刻，缺省为训练期最后一秒."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    按标签策略回放训练期日志，写出快照.
    """
    with _command(config, sets, log_dir, verbose, **{"ATTRIBUTION.POLICY": policy}) as rc:
        n = pipeline.run_snapshot(rc, log, out, observe_ts)
        console.print(f"快照样本数: {n} → {out}")


@app.command("train")
def train_cmd(
    log: Path = typer.Option(Path("data") / SystemConstants.EVENT_LOG_FILE, "--log", help="事件日志."),
    out: Path = typer.Option(Path("runs"), "--out", "-o", help="输出目录."),
    objective: str | None = typer.Option(None, "--objective", help="esdf / esmm / naive / shift / dfm."),
    epochs: int | None = typer.Option(None, "--epochs", help="训练轮数."),
    seed: int | None = typer.Option(None, "--seed", help="随机种子."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    构造目标对应的快照并训练，写出检查点与训练历史.
    """
    with _command(
        config, sets, log_dir, verbose,
        **{"TRAIN.OBJECTIVE": objective, "TRAIN.EPOCHS": epochs, "SEED": seed},
    ) as rc:
        _, history = pipeline.run_train(rc, read_event_log(log), out)
        console.print(f"训练完成: {len(history)} 个 epoch → {out}")


@app.command()
def evaluate(
    checkpoint: Path = typer.Option(Path("runs") / SystemConstants.CHECKPOINT_FILE, "--checkpoint", help="检查点."),
    log: Path = typer.Option(Path("data") / SystemConstants.EVENT_LOG_FILE, "--log", help="事件日志."),
    truth: Path | None = typer.Option(None, "--truth", help="真值文件，提供时输出校准报告."),
    out: Path = typer.Option(Path("runs") / SystemConstants.REPORT_FILE, "--out", "-o", help="报告文件."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    在测试日的真值标签上评估检查点.
    """
    with _command(config, sets, log_dir, verbose) as rc:
        report = pipeline.run_evaluate(rc, checkpoint, read_event_log(log), out, truth)
        console.print(render_report(report))


@app.command()
def report(
    inputs: List[Path] = typer.Argument(..., help="一个或多个评估报告."),
    out: Path = typer.Option(Path("reports"), "--out", "-o", help="输出目录."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    汇总多份报告：均值 ± 标准差、相对 ESMM 的 RelaImpr、延迟分布与分槽 log loss 数据文件.
    """
    with _command(config, sets, log_dir, verbose) as rc:
        rows = pipeline.run_report(rc, inputs, out)
        console.print(render_comparison(rows))


@app.command()
def experiment(
    n: int | None = typer.Option(None, "--n", help="每个种子的曝光数."),
    seeds: List[int] = typer.Option([7, 8, 9], "--seed", help="种子，可重复."),
    objectives: List[str] = typer.Option(
        [o.value for o in Objective], "--objective", help="参与对比的目标，可重复."
    ),
    out: Path = typer.Option(Path("experiment"), "--out", "-o", help="输出目录."),
    config: Path | None = ConfigOption,
    sets: List[str] | None = SetOption,
    log_dir: Path | None = LogDirOption,
    verbose: bool = VerboseOption,
):
    """
    多种子五目标对比：生成 → 快照 → 训练 → 评估 → 汇总.
    """
    with _command(config, sets, log_dir, verbose, **{"GENERATOR.N_IMPRESSIONS": n}):
        try:
            chosen = [Objective(o) for o in objectives]
        except ValueError as e:
            raise ConfigError(f"未知的训练目标: {e}") from None
        manager = ConfigManager.get_instance()

        def rc_for_seed(seed: int, objective: Objective | None) -> RunConfig:
            layer = {"SEED": seed}
            if objective is not None:
                layer["TRAIN"] = {"OBJECTIVE": objective.value}
            return RunConfig(manager.with_layer(layer, "实验参数"))

        result = pipeline.run_experiment(rc_for_seed, seeds, chosen, out)
        console.print(render_comparison(result.rows))


def main():
    app()


if __name__ == "__main__":
    app()
