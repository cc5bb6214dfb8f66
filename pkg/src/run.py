import sys
import time
from CFOIE import __version__
from CFOIE.core.errors import ConfigError
from CFOIE.core.experiment.config import load_config
from CFOIE.core.experiment.main import DRIVERS
import util.file as fs
from util.io import TimestampedOutput, IOManager

sys.stdout = TimestampedOutput(sys.stdout)
sys.stderr = TimestampedOutput(sys.stderr)

io_manager = IOManager("[Main]")


def main(argv=None):
    """Run one experiment family; exit code 1 if any solve failed to converge or a check failed."""
    args = io_manager.get_args(argv)
    print(f"Running CFOIE v{__version__}")

    try:
        cfg = load_config(args.config, seed=args.seed)
    except (ConfigError, OSError) as e:
        io_manager.write_error(f"Invalid config {args.config}: {e}")
        return 2

    out_dir = fs.run_directory(args.out or cfg.output.directory, fs.BASE_DIR / args.command)
    print(f"Command: {args.command}, config hash: {cfg.hash}, output: {out_dir}")

    start = time.perf_counter()
    table, ok = DRIVERS[args.command](cfg, out_dir, args.threads)
    print(f"{args.command} finished in {time.perf_counter() - start:.1f} s: {len(table)} row(s)")
    if not ok:
        io_manager.write_error("At least one solve did not converge or a check failed")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
