"""Flask application hosting the particle toolkit commands."""
import logging
import os
from flask import Flask
from config import config


def create_app(config_name=None):
    """Application factory pattern.

    Args:
        config_name: Configuration name (development, production, testing)

    Returns:
        Flask application instance
    """
    if config_name is None:
        config_name = os.getenv('TOOLKIT_ENV', 'default')

    app = Flask(__name__)
    app.config.from_object(config[config_name])

    # Library modules log through the standard hierarchy
    level = getattr(logging, str(app.config['LOG_LEVEL']).upper(), logging.INFO)
    app.logger.setLevel(level)
    for name in ('models', 'utils'):
        logging.getLogger(name).setLevel(level)
    if not logging.getLogger().handlers:
        logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    # Register command blueprints
    from commands.validation import validation_bp
    from commands.experiments import experiments_bp

    app.register_blueprint(validation_bp)
    app.register_blueprint(experiments_bp)

    return app
