# -*- coding: utf-8 -*-
"""Command line interface for the adaptive ROM controller."""
import argparse

from colorama import Fore, Style


def create_parser() -> argparse.ArgumentParser:
    """Create and configure argument parser."""
    parser = argparse.ArgumentParser(
        description=(
            f"{Fore.GREEN}{Style.BRIGHT}Design, deploy, monitor and adapt reduced-order "
            f"model controllers{Style.RESET_ALL}"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
{Fore.GREEN}{Style.BRIGHT}Examples:{Style.RESET_ALL}
  {Fore.CYAN}# Design a certified ROM and controller{Style.RESET_ALL}
  {Fore.YELLOW}%(prog)s{Style.RESET_ALL} design {Fore.CYAN}--descriptor{Style.RESET_ALL} heat.json \\
    {Fore.CYAN}--system{Style.RESET_ALL} systems/heat/ {Fore.CYAN}--out{Style.RESET_ALL} run/

  {Fore.CYAN}# Run a drift scenario with adaptation{Style.RESET_ALL}
  {Fore.YELLOW}%(prog)s{Style.RESET_ALL} adapt {Fore.CYAN}--bundle{Style.RESET_ALL} run/ \\
    {Fore.CYAN}--scenario{Style.RESET_ALL} scenarios/drift.json

  {Fore.CYAN}# Score the bundle and print the criteria as CSV{Style.RESET_ALL}
  {Fore.YELLOW}%(prog)s{Style.RESET_ALL} evaluate {Fore.CYAN}--bundle{Style.RESET_ALL} run/
  {Fore.YELLOW}%(prog)s{Style.RESET_ALL} report {Fore.CYAN}--run{Style.RESET_ALL} run/ \\
    {Fore.CYAN}--format{Style.RESET_ALL} csv

{Fore.BLUE}{Style.BRIGHT}Environment Variables:{Style.RESET_ALL}
  {Fore.MAGENTA}ROMCTL_SEED{Style.RESET_ALL}               Random seed of every stochastic step
  {Fore.MAGENTA}ROMCTL_ESTIMATOR{Style.RESET_ALL}          State estimator: output or projection
  {Fore.MAGENTA}ROMCTL_LOG_FILE{Style.RESET_ALL}           Log file path
        """,
    )

    parser.add_argument("--seed", type=int, help="Random seed (or set ROMCTL_SEED)", metavar="N")
    parser.add_argument(
        "--config", help="TOML or JSON file overriding default constants", metavar="PATH"
    )
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--no-color", action="store_true", help="Disable coloured output")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    design = commands.add_parser("design", help="Select methods and design a certified bundle")
    design.add_argument(
        "--descriptor", required=True, help="System descriptor JSON file", metavar="PATH"
    )
    design.add_argument(
        "--system",
        required=True,
        help="Directory with A.mtx B.mtx C.mtx or system.json, or a generator JSON file",
        metavar="PATH",
    )
    design.add_argument("--out", required=True, help="Bundle output directory", metavar="DIR")

    adapt = commands.add_parser("adapt", help="Run one closed-loop scenario with adaptation")
    adapt.add_argument("--bundle", required=True, help="Bundle directory", metavar="DIR")
    adapt.add_argument("--scenario", help="Scenario JSON file (default: nominal)", metavar="PATH")
    adapt.add_argument("--steps", type=int, help="Number of control steps", metavar="N")
    adapt.add_argument(
        "--out", help="Run output directory (default: <bundle>/runs/<scenario>)", metavar="DIR"
    )
    adapt.add_argument(
        "--static", action="store_true", help="Monitor only, keep the designed controller"
    )

    evaluate = commands.add_parser("evaluate", help="Score a bundle on the evaluation criteria")
    evaluate.add_argument("--bundle", required=True, help="Bundle directory", metavar="DIR")
    evaluate.add_argument(
        "--scenarios",
        help="Directory of scenario JSON files (default: built-in set)",
        metavar="DIR",
    )

    report = commands.add_parser("report", help="Render saved criteria and trace summary")
    report.add_argument(
        "--run", required=True, help="Directory holding criteria.json", metavar="DIR"
    )
    report.add_argument("--format", choices=["csv", "json"], default="json", help="Output format")

    return parser


def print_banner():
    """Print colorful banner."""
    banner = f"""
{Fore.CYAN}{Style.BRIGHT}
╔══════════════════════════════════════════════════════════╗
║              🎛️  Adaptive ROM Controller                  ║
║                  Reduced-Order Control                   ║
╚══════════════════════════════════════════════════════════╝
{Style.RESET_ALL}
{Fore.GREEN}Design, validate, monitor and adapt{Style.RESET_ALL}
{Fore.GREEN}reduced-order model controllers{Style.RESET_ALL}
"""
    print(banner)
