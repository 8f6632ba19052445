"""Tests for main: flag parsing and command dispatch."""

import os
import shutil
import tempfile

from absl import app
from absl import flags
from absl.testing import absltest
from absl.testing import flagsaver

import main
from cli.commands import ExitStatus
from engine import checks

FLAGS = flags.FLAGS


class MainTest(absltest.TestCase):

    def setUp(self):
        super().setUp()
        if not FLAGS.is_parsed():
            FLAGS.mark_as_parsed()
        self.tmp = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.tmp)

    def path(self, name):
        return os.path.join(self.tmp, name)

    def gen(self, name="inst.json"):
        with flagsaver.flagsaver(out=self.path(name), m=4, seed=42):
            self.assertEqual(main.main(["main.py", "gen"]), ExitStatus.OK)
        return self.path(name)

    def test_defaults(self):
        self.assertEqual(FLAGS["chords"].default, 1000)
        self.assertEqual(main.DEFAULTS["CHORDS"], checks.DEFAULT_CHORDS)
        self.assertEqual(FLAGS["seeds"].default, 100)

    def test_gen_writes_the_instance(self):
        inst = self.gen()
        with open(inst, encoding="utf-8") as fh:
            self.assertIn('"num_input": 4', fh.read())

    def test_route_with_short_flags(self):
        inst = self.gen()
        with flagsaver.flagsaver():
            rest = FLAGS(["main.py", "route", "-i", inst, "-o", self.path("traj.csv"),
                          "--iterations", "4", "--form", "matrix"])
            self.assertEqual(rest, ["main.py", "route"])
            self.assertEqual(FLAGS.input, inst)
            self.assertEqual(main.main(rest), ExitStatus.OK)
        with open(self.path("traj.csv"), encoding="utf-8") as fh:
            self.assertLen(fh.read().splitlines(), 1 + 5 * 3)

    def test_experiment_takes_its_name_as_an_argument(self):
        with flagsaver.flagsaver(out=self.path("out"), seed=42, iterations=20):
            status = main.main(["main.py", "experiment", "numerical"])
        self.assertEqual(status, ExitStatus.OK)
        self.assertTrue(os.path.exists(os.path.join(self.tmp, "out", "numerical_report.json")))

    def test_check_dispatch(self):
        with flagsaver.flagsaver(seeds=1, family="zero", max_m=3, max_n=3, max_dim=2, chords=10,
                                 summary_csv=self.path("summary.csv")):
            self.assertEqual(main.main(["main.py", "check"]), ExitStatus.OK)
        self.assertTrue(os.path.exists(self.path("summary.csv")))

    def test_usage_errors(self):
        cases = (
            ("no command", ["main.py"], {}),
            ("unknown command", ["main.py", "train"], {}),
            ("experiment without a name", ["main.py", "experiment"], {"out": self.path("out")}),
            ("experiment with two names", ["main.py", "experiment", "numerical", "distribution"],
             {"out": self.path("out")}),
            ("route without input", ["main.py", "route"], {"out": self.path("traj.csv")}),
            ("radii that are not numbers", ["main.py", "gen"],
             {"kind": "ring", "m": 5, "out": self.path("ring.json"), "radii": ["0", "one"]}),
        )
        for name, argv, overrides in cases:
            with self.subTest(name):
                with flagsaver.flagsaver(**overrides):
                    with self.assertRaises(app.UsageError) as ctx:
                        main.main(argv)
                self.assertEqual(ctx.exception.exitcode, 2)


if __name__ == "__main__":
    absltest.main()
