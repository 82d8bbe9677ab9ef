# -*- coding: utf-8 -*-
"""Adaptive ROM Controller - Main entry point."""
import logging
import os
import sys

from colorama import init

from .cli import create_parser, print_banner
from .config import get_config_from_env, get_environment_info
from .errors import PipelineError
from .formatters import OutputFormatter
from .run_manager import RunManager

# Initialize colorama
init(autoreset=True)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Configure logging; the file handler follows the configuration
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, handlers=[logging.StreamHandler()])

logger = logging.getLogger(__name__)


def attach_log_file(path):
    """Send the root log to ``path`` as well; one handler per file."""
    root = logging.getLogger()
    target = os.path.abspath(path)
    for handler in root.handlers:
        if isinstance(handler, logging.FileHandler) and handler.baseFilename == target:
            return handler
    handler = logging.FileHandler(target)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    return handler


def handle_operations(args, run_manager):
    """Handle different operations based on command line arguments."""
    if args.command == "design":
        run_manager.design(args.descriptor, args.system, args.out)
    elif args.command == "adapt":
        run_manager.adapt(args.bundle, args.scenario, args.steps, args.out, args.static)
    elif args.command == "evaluate":
        run_manager.evaluate(args.bundle, args.scenarios)
    elif args.command == "report":
        run_manager.report(args.run, args.format)
    else:
        raise ValueError("No command given; choose one of design, adapt, evaluate, report")


def handle_error(error, args=None):
    """Handle different types of errors with appropriate messages."""
    if isinstance(error, PipelineError):
        print(f"Error: {error}", file=sys.stderr)
        if error.trace is not None:
            print(f"Escalations recorded: {len(error.trace.escalations)}", file=sys.stderr)
        return 1
    if isinstance(error, ValueError):
        # Configuration/validation and domain errors - clean user-friendly message
        print(f"Error: {error}", file=sys.stderr)
        return 1
    if isinstance(error, FileNotFoundError):
        print(f"Error: {error}", file=sys.stderr)
        print("Please check that the specified file exists and is readable.", file=sys.stderr)
        return 1
    if isinstance(error, PermissionError):
        print(f"Error: {error}", file=sys.stderr)
        print("Please check file permissions.", file=sys.stderr)
        return 1
    if isinstance(error, KeyboardInterrupt):
        # User pressed Ctrl+C - clean exit
        print("\nOperation cancelled by user", file=sys.stderr)
        return 130

    # Unexpected errors (divergence included) - show minimal info, suggest debug mode
    print(f"Unexpected error: {error}", file=sys.stderr)

    if args and hasattr(args, "debug") and args.debug:
        logger.exception("Full error details:")
    else:
        print("Run with --debug for more details.", file=sys.stderr)

    return 1


def main(argv=None):
    """Main entry point."""
    args = None
    try:
        parser = create_parser()
        args = parser.parse_args(argv)
        if not args.no_color:
            print_banner()

        # Set debug logging if requested
        if args.debug:
            logging.getLogger().setLevel(logging.DEBUG)
            logger.setLevel(logging.DEBUG)
            logger.debug("Debug logging enabled")

        # Get configuration - this can raise ValueError for user errors
        config = get_config_from_env(args)
        attach_log_file(config.log_file)
        logger.debug("Environment: %s", get_environment_info())

        formatter = OutputFormatter(use_colors=not args.no_color)
        run_manager = RunManager(config, formatter)

        handle_operations(args, run_manager)

    except (Exception, KeyboardInterrupt) as error:
        exit_code = handle_error(error, args)
        sys.exit(exit_code)


if __name__ == "__main__":
    main()
