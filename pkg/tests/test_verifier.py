"""
Unit tests for the acceptance verifier.

Studies are replaced with canned results so these run instantly.
"""

import json
import os
import sys
import tempfile
import unittest
from unittest.mock import patch

# Add src directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from gaussvgd.experiments import StudyResult
from gaussvgd.verifier import CHECK_GROUPS, SLOW_CHECKS, AcceptanceVerifier, main


def _result(name, passed):
    return StudyResult(name, passed, {"rel_error": 0.01}, [], {})


class TestResolve(unittest.TestCase):
    """Check selection."""

    def setUp(self):
        self.verifier = AcceptanceVerifier()

    def test_group(self):
        self.assertEqual(self.verifier.resolve(['rates']), ['rates', 'k1_rate'])

    def test_all_without_duplicates(self):
        names = self.verifier.resolve(['all', 'riccati'])
        self.assertEqual(len(names), len(set(names)))
        self.assertEqual(len(names), sum(len(g) for g in CHECK_GROUPS.values()))

    def test_skip_slow(self):
        names = self.verifier.resolve(['all'], skip_slow=True)
        self.assertFalse(SLOW_CHECKS & set(names))
        self.assertIn('riccati', names)

    def test_single_study(self):
        self.assertEqual(self.verifier.resolve(['geometry', 'stepsize']), ['geometry', 'stepsize'])

    def test_unknown(self):
        with self.assertRaises(ValueError):
            self.verifier.resolve(['nope'])


class TestRunCheck(unittest.TestCase):
    """Turning study results into PASS/FAIL entries."""

    def setUp(self):
        self.verifier = AcceptanceVerifier()

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_pass(self, mock_run_study):
        mock_run_study.return_value = _result('riccati', True)
        with patch('builtins.print'):
            entry = self.verifier.run_check('riccati')
        self.assertEqual(entry['status'], 'PASS')
        self.assertEqual(entry['message'], 'verified')
        self.assertEqual(entry['details'], {"rel_error": 0.01})

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_reported_only_counts_as_pass(self, mock_run_study):
        mock_run_study.return_value = _result('chaos', None)
        with patch('builtins.print'):
            entry = self.verifier.run_check('chaos')
        self.assertEqual(entry['status'], 'PASS')
        self.assertEqual(entry['message'], 'reported')

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_failed_check(self, mock_run_study):
        mock_run_study.return_value = _result('rates', False)
        with patch('builtins.print'):
            entry = self.verifier.run_check('rates')
        self.assertEqual(entry['status'], 'FAIL')

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_exception_becomes_failure(self, mock_run_study):
        mock_run_study.side_effect = ArithmeticError("overflow")
        with patch('builtins.print'):
            entry = self.verifier.run_check('stepsize')
        self.assertEqual(entry['status'], 'FAIL')
        self.assertEqual(entry['error'], 'ArithmeticError: overflow')

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_outputs_written(self, mock_run_study):
        mock_run_study.return_value = _result('geometry', True)
        with tempfile.TemporaryDirectory() as tmp:
            verifier = AcceptanceVerifier(outdir=tmp)
            with patch('builtins.print'):
                verifier.run_check('geometry')
            self.assertTrue(os.path.exists(os.path.join(tmp, 'geometry', 'geometry_summary.json')))

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_summary_counts(self, mock_run_study):
        mock_run_study.side_effect = lambda name: _result(name, name != 'k1_rate')
        with patch('builtins.print'):
            results = self.verifier.run_checks(['rates'])
        self.assertEqual(results['summary'], {'total': 2, 'passed': 1, 'failed': 1})


class TestCommandLineInterface(unittest.TestCase):
    """The gaussvgd-verify entry point."""

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_all_pass(self, mock_run_study):
        mock_run_study.side_effect = lambda name: _result(name, True)
        with patch('builtins.print'):
            main(['--skip-slow', 'closed-form'])
        self.assertEqual([c.args[0] for c in mock_run_study.call_args_list],
                         ['riccati', 'closed_form_trajectory', 'hamiltonian'])

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_failure_exits_nonzero(self, mock_run_study):
        mock_run_study.return_value = _result('geometry', False)
        with patch('builtins.print'):
            with self.assertRaises(SystemExit) as ctx:
                main(['geometry'])
        self.assertEqual(ctx.exception.code, 1)

    @patch.object(AcceptanceVerifier, 'run_study')
    def test_json_output(self, mock_run_study):
        mock_run_study.return_value = _result('geometry', True)
        with patch('builtins.print') as mock_print:
            main(['--json', 'geometry'])
        output = json.loads(mock_print.call_args_list[-1].args[0])
        self.assertEqual(output['summary']['passed'], 1)
        self.assertEqual(output['tests_run'][0]['test'], 'geometry')

    def test_unknown_check_is_usage_error(self):
        with patch('sys.stderr'):
            with self.assertRaises(SystemExit) as ctx:
                main(['banana'])
        self.assertEqual(ctx.exception.code, 2)


if __name__ == '__main__':
    unittest.main()
