from .run import RunReport, calibrate, emit_oc, fixed_scenario, run
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario, shipped_scenario

__all__ = ["RunReport", "Scenario", "ScenarioError", "calibrate", "emit_oc", "fixed_scenario",
           "load_scenario", "parse_scenario", "run", "shipped_scenario"]
