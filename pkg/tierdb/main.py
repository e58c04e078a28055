"""
命令行入口
run / inspect / policies / catalog；退出码 0 成功，1 断言失败，2 解析或用法错误
"""
import json
import sys
from typing import Optional

import click
from dotenv import load_dotenv

from .config_manager import ConfigManager
from .errors import AssertionFailed, MalformedPolicy, ParseError, TierDBError, UnknownSnapshot
from .eula import library_text, list_library, load_library_policy
from .logger import logger
from .scenario import ScenarioRunner, load_scenario
from .snapshot import load_snapshot, query_snapshot, write_snapshot

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2


@click.group()
@click.option("--log-level", default=None, help="日志级别，覆盖配置与 TIERDB_LOG_LEVEL")
def cli(log_level: Optional[str]):
    """分层微数据库场景运行器"""
    load_dotenv()
    if log_level:
        logger.setLevel(log_level.upper())


@cli.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, type=int, show_default=True, help="随机工作负载的种子")
@click.option("--snapshot", "snapshot_path", default=None, type=click.Path(dir_okay=False),
              help="把最终状态快照写到该文件")
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False),
              help="JSON 配置文件")
def run(scenario: str, seed: int, snapshot_path: Optional[str], config_path: Optional[str]):
    """执行场景并打印报告；给出 --config 时监控该文件，运行期间的修改即时生效"""
    config = ConfigManager(config_path, watch=True) if config_path else None
    try:
        _run(scenario, seed, snapshot_path, config)
    finally:
        if config is not None:
            config.stop_watching()


def _run(scenario: str, seed: int, snapshot_path: Optional[str], config: Optional[ConfigManager]):
    try:
        runner = ScenarioRunner.from_file(scenario, seed, config)
    except ParseError as e:
        click.echo(f"解析错误: {e}", err=True)
        sys.exit(EXIT_USAGE)

    exit_code = EXIT_OK
    try:
        report = runner.run()
    except ParseError as e:
        click.echo(f"解析错误: {e}", err=True)
        sys.exit(EXIT_USAGE)
    except AssertionFailed as e:
        click.echo(f"断言失败: {e}", err=True)
        report = runner.report
        exit_code = EXIT_ASSERTION

    if snapshot_path:
        write_snapshot(runner.topology, snapshot_path)
        logger.info(f"快照已写入 {snapshot_path}")
    click.echo(json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False))
    sys.exit(exit_code)


@cli.command()
@click.argument("snapshot_path", metavar="SNAPSHOT")
@click.argument("query")
def inspect(snapshot_path: str, query: str):
    """按查询打印快照中的记录或工作请求状态"""
    try:
        state = load_snapshot(snapshot_path)
    except UnknownSnapshot as e:
        click.echo(str(e), err=True)
        sys.exit(EXIT_USAGE)
    for line in query_snapshot(state, query):
        click.echo(line)


@cli.group()
def policies():
    """预定义 EULA 策略库"""


@policies.command(name="list")
def policies_list():
    for name in list_library():
        policy = load_library_policy(name)
        click.echo(f"{name}\t{len(policy.rules)} 条规则")


@policies.command(name="show")
@click.argument("name")
def policies_show(name: str):
    try:
        click.echo(library_text(name), nl=False)
    except MalformedPolicy as e:
        click.echo(str(e), err=True)
        sys.exit(EXIT_USAGE)


@cli.group()
def catalog():
    """应用商店目录"""


@catalog.command(name="list")
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
def catalog_list(scenario: str):
    """只执行场景中的 publish 指令，列出目录条目"""
    try:
        runner = ScenarioRunner(load_scenario(scenario))
        runner.run(verbs=frozenset({"publish"}))
    except ParseError as e:
        click.echo(f"解析错误: {e}", err=True)
        sys.exit(EXIT_USAGE)
    except TierDBError as e:
        click.echo(f"发布失败: {e}", err=True)
        sys.exit(EXIT_ASSERTION)
    for entry in runner.catalog.search():
        manifest = entry.manifest
        click.echo(f"{entry.entry_id}\t{manifest.kind.value}\tplatform={manifest.required_platform_version}\t"
                   f"{manifest.content_hash}\tby={entry.publisher}")


def main():
    cli(prog_name="tierdb")


if __name__ == "__main__":
    main()
