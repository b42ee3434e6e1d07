"""
Main entry point for sliceguard.
Runs a single CLI verb, or starts the interactive shell and/or the API server.
"""
import argparse
import logging
import sys
import threading

from communication.api_server import start_api_server
from communication.cli import run_command, start_cli
from config import get_settings

# Configure logging
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=getattr(logging, get_settings().log_level.upper(), logging.INFO)
)
logger = logging.getLogger(__name__)


def parse_arguments(argv=None):
    """Parse command line arguments to determine which components to start."""
    parser = argparse.ArgumentParser(description="sliceguard testbed")
    parser.add_argument("--cli", action="store_true", help="Start the interactive shell")
    parser.add_argument("--api", action="store_true", help="Start API server")
    parser.add_argument("--all", action="store_true", help="Start all components")

    args = parser.parse_args(argv)

    # If no specific component is selected, default to CLI
    if not (args.cli or args.api or args.all):
        args.cli = True

    return args


def start_component(start_func, component_name):
    """Start a component and log its failure."""
    try:
        logger.info(f"Starting {component_name}...")
        start_func()
    except Exception as e:
        logger.error(f"Error in {component_name}: {e}")


def main(argv=None):
    """Run a verb if one is given, otherwise start the selected front-ends."""
    argv = sys.argv[1:] if argv is None else list(argv)
    if argv and not argv[0].startswith("-"):
        return run_command(argv)

    args = parse_arguments(argv)
    start_shell = args.cli or args.all
    start_api = args.api or args.all

    if start_api and not start_shell:
        start_component(start_api_server, "API server")
        return 0

    if start_api:
        api_thread = threading.Thread(target=start_component, args=(start_api_server, "API server"))
        api_thread.daemon = True
        api_thread.start()

    # input() needs the main thread
    start_component(start_cli, "CLI interface")
    return 0


if __name__ == "__main__":
    sys.exit(main())
