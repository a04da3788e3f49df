"""Console entry point for the particle toolkit commands."""
import click
from flask.cli import FlaskGroup

from app import create_app


@click.group(cls=FlaskGroup, create_app=create_app, add_default_commands=False, load_dotenv=True)
def cli():
    """Simulate and verify non-colliding particle systems."""


if __name__ == '__main__':
    cli()
