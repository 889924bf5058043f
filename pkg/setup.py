#!/usr/bin/env python3
"""
Shift Tracker Setup Script

Bootstraps a working checkout:
1. Checks the Python version
2. Installs the pinned dependencies with pip
3. Copies the example experiment config into place
4. Imports the package modules and runs a two-round smoke experiment
"""

import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG_TEMPLATE = Path("configs") / "synthetic.example.env"
CONFIG_FILE = Path("configs") / "synthetic.env"


def check_python_version() -> None:
    """Exit unless the interpreter is Python 3.9 or newer."""
    print("Checking Python version...")
    if sys.version_info < (3, 9):
        print("Error: Python 3.9 or higher is required.")
        print(f"   Current version: {sys.version}")
        sys.exit(1)
    print(f"Python {sys.version.split()[0]} is compatible")


def install_dependencies() -> None:
    print("\nInstalling dependencies with pip...")
    try:
        subprocess.run([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"], check=True)
    except subprocess.CalledProcessError as e:
        print(f"Failed to install dependencies: {e}")
        sys.exit(1)
    print("Dependencies installed")


def setup_config_file() -> None:
    """Copy the example config so local edits never touch the tracked template."""
    print("\nSetting up the experiment config...")
    if CONFIG_FILE.exists():
        print(f"{CONFIG_FILE} already exists")
        return
    if not CONFIG_TEMPLATE.exists():
        print(f"{CONFIG_TEMPLATE} not found; runs will use the built-in defaults")
        return
    shutil.copy(CONFIG_TEMPLATE, CONFIG_FILE)
    print(f"Created {CONFIG_FILE} from {CONFIG_TEMPLATE}")


def smoke_test() -> None:
    print("\nRunning a smoke experiment...")
    try:
        from harness import build_config, run_experiment

        with tempfile.TemporaryDirectory() as out:
            cfg = build_config(
                {"horizon": 2, "n_offline": 50, "gamma_ons": 5.0, "seeds": "0", "prop2_mc": 0, "out": out}
            )
            result = run_experiment(cfg)
        if result.any_failed:
            print("Smoke experiment finished with a failed seed")
        else:
            print("Smoke experiment passed")
    except Exception as e:
        print(f"Smoke experiment failed: {e}")
        print("   Check your dependencies")


def main() -> None:
    print("Shift Tracker Setup")
    print("=" * 50)
    try:
        check_python_version()
        install_dependencies()
        setup_config_file()
        smoke_test()

        print("\nSetup complete!")
        print("\nNext steps:")
        print(f"1. Edit {CONFIG_FILE} if you want other defaults")
        print(f"2. python app.py run-synthetic --config {CONFIG_FILE} --out results")
        print("3. python -m pytest")
    except KeyboardInterrupt:
        print("\n\nSetup interrupted by user")
        sys.exit(1)


if __name__ == "__main__":
    if len(sys.argv) > 1:
        # Invoked by a build backend (e.g. pip install): metadata lives in pyproject.toml.
        from setuptools import setup

        setup()
    else:
        main()
