"""capsroute: dynamic routing between capsules, its energy and its experiments.

Usage:
  python main.py gen --kind random --m 4 --n 3 --dim 2 --seed 42 --scale 1 -o inst.json
  python main.py gen --kind ring --m 30 --seed 7 -o ring.json
  python main.py route -i inst.json --iterations 20 --form both -o traj.csv [--svg plot.svg]
  python main.py experiment numerical|distribution [-i inst.json] --iterations 20 -o out/
  python main.py check --seeds 100 --tolerance 1e-9 [--summary_csv summary.csv]

Routing records iteration 0 (B = 0, uniform C) plus one record per iteration,
so --iterations K yields K + 1 rows per capsule.
"""

from absl import app
from absl import flags

from cli import commands
from engine import checks

# ---------------- DEFAULTS ----------------
DEFAULTS = {
    "ROUTE_ITERATIONS": 3,
    "EXPERIMENT_ITERATIONS": 20,
    "SCALE": 1.0,
    "RING_RADII": ["0", "1", "1", "1"],
    "RING_NOISE": 0.1,
    "SEEDS": 100,
    "TOLERANCE": 1e-9,
    "CHORDS": checks.DEFAULT_CHORDS,
    "MAX_M": 16,
    "MAX_N": 16,
    "MAX_DIM": 8,
}

COMMANDS = ("gen", "route", "experiment", "check")

# ---------------- FLAGS ----------------
FLAGS = flags.FLAGS

flags.DEFINE_string("out", None, "Output file (gen, route) or directory (experiment).", short_name="o")
flags.DEFINE_string("input", None, "Instance JSON to read.", short_name="i")
flags.DEFINE_integer("seed", None, "Generator seed; defaults to $CAPSROUTE_SEED, then 42.")
flags.DEFINE_integer("iterations", None, "Routing iterations K (route: 3, experiment: 20).")

flags.DEFINE_enum("kind", "random", ["random", "ring"], "Instance generator.")
flags.DEFINE_integer("m", None, "Number of input capsules M.")
flags.DEFINE_integer("n", None, "Number of output capsules N (random generator).")
flags.DEFINE_integer("dim", None, "Output capsule dimension (random generator).")
flags.DEFINE_float("scale", DEFAULTS["SCALE"], "Entries are uniform on [-scale, scale].")
flags.DEFINE_list("radii", DEFAULTS["RING_RADII"], "Ring cluster radii, one per output capsule.")
flags.DEFINE_float("noise", DEFAULTS["RING_NOISE"], "Ring cluster noise (std).")

flags.DEFINE_enum("form", "both", list(commands.FORMS), "Routing form; 'both' also compares them.")
flags.DEFINE_string("couplings_json", None, "Optional JSON dump of B and C per iteration.")
flags.DEFINE_string("svg", None, "Optional SVG agreement plot for route.")
flags.DEFINE_float("stop_tolerance", None, "Stop early once |C(r+1) - C(r)|_F drops below this.")

flags.DEFINE_integer("seeds", DEFAULTS["SEEDS"], "Number of seeded instances for check.")
flags.DEFINE_float("tolerance", DEFAULTS["TOLERANCE"], "Energy-descent tolerance for check.")
flags.DEFINE_enum("family", "random", ["random", "zero"], "Instance family for check.")
flags.DEFINE_integer("chords", DEFAULTS["CHORDS"], "Chords per concavity check; conjugate curvature checks use a quarter.")
flags.DEFINE_integer("workers", 1, "Worker threads for check; output stays ordered by seed.")
flags.DEFINE_integer("max_m", DEFAULTS["MAX_M"], "Largest M drawn by check.")
flags.DEFINE_integer("max_n", DEFAULTS["MAX_N"], "Largest N drawn by check.")
flags.DEFINE_integer("max_dim", DEFAULTS["MAX_DIM"], "Largest capsule dimension drawn by check.")
flags.DEFINE_string("summary_csv", None, "Per-seed check results as CSV.")


def _radii():
    try:
        return [float(r) for r in FLAGS.radii]
    except ValueError:
        raise commands.usage(f"--radii must be numbers, got {FLAGS.radii}")


def _iterations(default):
    return default if FLAGS.iterations is None else FLAGS.iterations


def main(argv):
    if len(argv) < 2 or argv[1] not in COMMANDS:
        raise commands.usage(f"expected one of {COMMANDS} as the command")
    command, rest = argv[1], argv[2:]

    if command == "gen":
        return commands.cmd_gen(
            FLAGS.kind, FLAGS.out, m=FLAGS.m, n=FLAGS.n or 3, dim=FLAGS.dim or 2,
            scale=FLAGS.scale, seed=FLAGS.seed, radii=_radii(), noise=FLAGS.noise)

    if command == "route":
        if not FLAGS.input:
            raise commands.usage("-i/--input is required")
        return commands.cmd_route(
            FLAGS.input, FLAGS.out, iterations=_iterations(DEFAULTS["ROUTE_ITERATIONS"]),
            form=FLAGS.form, out_couplings_json=FLAGS.couplings_json, out_svg=FLAGS.svg,
            stop_tolerance=FLAGS.stop_tolerance)

    if command == "experiment":
        if len(rest) != 1:
            raise commands.usage("experiment takes one name: numerical or distribution")
        return commands.cmd_experiment(
            rest[0], FLAGS.out, iterations=_iterations(DEFAULTS["EXPERIMENT_ITERATIONS"]),
            input_path=FLAGS.input, seed=FLAGS.seed, m=FLAGS.m, n=FLAGS.n, dim=FLAGS.dim,
            scale=FLAGS.scale, radii=_radii(), noise=FLAGS.noise)

    sizes = {"m": (2, FLAGS.max_m), "n": (2, FLAGS.max_n), "dim": (2, FLAGS.max_dim)}
    return commands.cmd_check(
        FLAGS.seeds, tolerance=FLAGS.tolerance, family=FLAGS.family, sizes=sizes,
        chords=FLAGS.chords, workers=FLAGS.workers, summary_csv=FLAGS.summary_csv)


if __name__ == "__main__":
    app.run(main)
