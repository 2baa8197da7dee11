import logging

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from iae.cli.evaluate import evaluate_command
from iae.cli.generate import generate_command
from iae.cli.simulate import simulate_command
from iae.cli.train import train_command
from iae.core.config import get_settings
from iae.core.errors import EXIT_INPUT, EXIT_RUNTIME, IaeError

load_dotenv()

# python -m iae <command> --help
logging.basicConfig(
    level=get_settings().log_level.upper(),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


class IaeGroup(click.Group):
    """Maps package errors to exit codes with a one-line message on stderr."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except IaeError as exc:
            logger.debug("command failed", exc_info=True)
            click.echo(f"error: {exc.detail}", err=True)
            ctx.exit(exc.exit_code)
        except ValidationError as exc:
            errors = "; ".join(
                f"{'.'.join(map(str, err['loc'])) or 'config'}: {err['msg']}" for err in exc.errors()
            )
            click.echo(f"error: invalid configuration: {errors}", err=True)
            ctx.exit(EXIT_INPUT)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_RUNTIME)


@click.group(cls=IaeGroup)
def cli():
    """Individual advertising effect estimation and lvr-bidding simulation."""


# Register commands
cli.add_command(generate_command)
cli.add_command(train_command)
cli.add_command(evaluate_command)
cli.add_command(simulate_command)
