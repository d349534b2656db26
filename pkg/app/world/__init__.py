from .scenario import Scenario, ScenarioFormatError, Task, load_scenario, save_scenario
from .simulator import (ForceReading, MovableObjectTruth, PushOutcome, RobotTruth, ScanFrame, ScanPoint, World,
                        WorldError)
