from contextlib import contextmanager
from datetime import datetime, timezone
import argparse
import os
import sys
import time

SUBCOMMANDS = ("convergence", "lowfreq", "frequency", "single", "verify")

class TimestampedOutput:
    def __init__(self, stream):
        self.stream = stream

    def write(self, message):
        if message.strip():  # skip empty lines
            timestamp = datetime.now(timezone.utc).isoformat()
            self.stream.write(f"[{timestamp}] {message}")
        else:
            self.stream.write(message)

    def flush(self):
        self.stream.flush()

class IOManager:
    def __init__(self, header):
        self.header = header

    def get_args(self, argv=None):
        """Parse and validate CFOIE command-line arguments."""
        parser = argparse.ArgumentParser(
            description="CFOIE experiment runner (direct combined-field-only BIEs for PEC scattering)"
        )
        parser.add_argument(
            "command",
            choices=SUBCOMMANDS,
            help="Experiment family to run"
        )
        parser.add_argument(
            "--config",
            type=str,
            required=True,
            metavar="PATH",
            help="Run config (JSON or TOML)"
        )
        parser.add_argument(
            "--out",
            type=str,
            default=None,
            metavar="DIR",
            help="Output directory (defaults to the config's output.directory)"
        )
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            metavar="N",
            help="Worker threads for sweep points (falls back to CFOIE_THREADS)"
        )
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            metavar="S",
            help="Random seed override"
        )

        args = parser.parse_args(argv)

        # ===== Validation =====
        if not os.path.isfile(args.config):
            self.write_error(f"Config file not found: {args.config}")
            sys.exit(2)

        if args.threads is None:
            env_threads = os.environ.get("CFOIE_THREADS")
            if env_threads:
                try:
                    args.threads = int(env_threads)
                except ValueError:
                    self.write_warning(f"Ignoring non-integer CFOIE_THREADS={env_threads!r}")

        if args.threads is not None and args.threads < 1:
            self.write_error("--threads must be at least 1")
            sys.exit(2)

        return args

    @contextmanager
    def timed(self, label):
        """Log the wall time of a block as a DEBUG line."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.write_debug(f"{label} took {time.perf_counter() - start:.2f} s")

    def write_debug(self, msg):
        print(f"{self.header} DEBUG: {msg}")
        return

    def write_warning(self, msg):
        print(f"{self.header} WARN: {msg}")
        return

    def write_error(self, msg):
        print(f"{self.header} ERROR: {msg}")
        return
