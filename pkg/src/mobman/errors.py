"""Exception hierarchy shared by every module."""


class MobmanError(Exception):
    """Base class for all package errors."""


# geometry / kinematics
class KinematicsError(MobmanError):
    pass


class MissingJoint(KinematicsError):
    def __init__(self, name):
        super().__init__(f"joint state omits actuated joint {name!r}")
        self.name = name


class UnknownLink(KinematicsError):
    def __init__(self, name):
        super().__init__(f"unknown link {name!r}")
        self.name = name


class NoConvergence(KinematicsError):
    pass


class UnreachableTarget(KinematicsError):
    pass


# assets
class AssetError(MobmanError):
    pass


class XmlMalformed(AssetError):
    pass


class UnsupportedElement(AssetError):
    def __init__(self, name):
        super().__init__(f"unsupported URDF element {name!r}")
        self.name = name


class DuplicateName(AssetError):
    def __init__(self, name):
        super().__init__(f"duplicate name {name!r}")
        self.name = name


class CycleDetected(AssetError):
    pass


class DanglingReference(AssetError):
    def __init__(self, name):
        super().__init__(f"reference to undeclared element {name!r}")
        self.name = name


class InvalidModel(AssetError):
    pass


class UnknownMountLink(AssetError):
    def __init__(self, name):
        super().__init__(f"mount link {name!r} not in base model")
        self.name = name


class NameCollision(AssetError):
    def __init__(self, name):
        super().__init__(f"name {name!r} present in both models")
        self.name = name


class BadPrefix(AssetError):
    pass


# simulation
class SimError(MobmanError):
    pass


class UnknownRobot(SimError):
    def __init__(self, robot_id):
        super().__init__(f"unknown robot {robot_id!r}")
        self.robot_id = robot_id


class UnknownObject(SimError):
    def __init__(self, object_id):
        super().__init__(f"unknown object {object_id!r}")
        self.object_id = object_id


class TooFarToGrasp(SimError):
    pass


class NothingAttached(SimError):
    pass


# control
class ControlError(MobmanError):
    pass


class TrackingDiverged(ControlError):
    pass



# navigation
class NavigationError(MobmanError):
    pass


class NoPath(NavigationError):
    pass


class StartOccupied(NoPath):
    pass


class GoalOccupied(NoPath):
    pass


class AllTrajectoriesCollide(NavigationError):
    pass


# manipulation
class ManipulationError(MobmanError):
    pass


class StartInCollision(ManipulationError):
    pass


class GoalInCollision(ManipulationError):
    pass


class IkFailed(ManipulationError):
    pass


class PlanningTimeout(ManipulationError):
    def __init__(self, max_iters):
        super().__init__(f"no connection after {max_iters} iterations")
        self.max_iters = max_iters


class ObjectTooWide(ManipulationError):
    pass


# task planning
class TaskPlanningError(MobmanError):
    pass


class DomainSyntaxError(TaskPlanningError):
    pass


class GoalUnreachable(TaskPlanningError):
    pass


class Ungroundable(TaskPlanningError):
    pass


class SearchBudgetExceeded(TaskPlanningError):
    pass


# skill execution
class UnboundSchema(MobmanError):
    def __init__(self, name):
        super().__init__(f"no skill binding for schema {name!r}")
        self.name = name


class UnknownSkill(MobmanError):
    pass


# configuration
class ConfigError(MobmanError):
    pass


class ParseError(ConfigError):
    def __init__(self, file, line, problem=""):
        super().__init__(f"{file}:{line}: {problem}".rstrip(": "))
        self.file = file
        self.line = line


class MissingRequiredKey(ConfigError):
    def __init__(self, path):
        super().__init__(f"missing required key {path!r}")
        self.path = path


class TypeMismatch(ConfigError):
    def __init__(self, path, expected, got):
        super().__init__(f"{path}: expected {expected}, got {type(got).__name__}")
        self.path = path
