from srnpose.cli.commands import cli, main
from srnpose.cli.config import RunConfig, build_config, load_config, parse_override
from srnpose.cli.report import aligned_text, merge_runs
