"""Cell orchestration: the state machine sequencing localization, selection,
pick, clean, flip, re-localization, clean, place; the retry/skip policy; and
the timing ledger that produces the run report.

Each simulated action charges its configured duration into the action log;
the physics (forces, powder, masses) runs underneath at full fidelity. A run
is a deterministic function of (scene, config, seed).
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import SimConfig
from .control import ContactModel
from .errors import ContactLost, InvalidQuery, NotFlippable, Unreachable
from .geometry import Aabb3, Pose
from .perception import (
    Detection,
    DetectorModel,
    DepthImage,
    detect,
    estimate_pose,
    render_depth,
)
from .planner import PlannedPath, Workspace, plan
from .primitives import (
    CleanOutcome,
    PickOutcome,
    RemovalModel,
    SuctionModel,
    clean,
    flip,
    pick,
    place,
    rectircle_path,
    spiral_path,
)
from .report import ActionLog, PartRow, RunReport, human_baseline, removal_percent
from .scene import PartStatus, SceneState, part_total_mass

__all__ = [
    "CellState", "FailureKind", "Strategy", "Policy", "DecakeCell",
    "select_next_part", "run", "run_batch", "human_baseline",
    "set_brushing_budget",
]


class CellState(enum.Enum):
    LOCALIZE_BIN = "LocalizeBin"
    SELECT_PART = "SelectPart"
    PICK_FROM_BIN = "PickFromBin"
    CLEAN_FACE_A = "CleanFaceA"
    DROP_TO_FLIPPER = "DropToFlipper"
    RELOCALIZE_ALL = "RelocalizeAll"
    PICK_FROM_FLIP_AREA = "PickFromFlipArea"
    CLEAN_FACE_B = "CleanFaceB"
    PLACE_DONE = "PlaceDone"
    NEXT_OR_FINISH = "NextOrFinish"
    HALT = "Halt"


class FailureKind(enum.Enum):
    HEIGHT_MISMATCH = "HeightMismatch"
    SEAL_FAIL = "SealFail"
    DROP_DURING_LIFT = "DropDuringLift"
    DROP_DURING_CLEAN = "DropDuringClean"
    CONTACT_LOST = "ContactLost"
    NOT_FLIPPABLE = "NotFlippable"
    NO_DETECTION = "NoDetection"
    PLANNER_UNREACHABLE = "PlannerUnreachable"


class Strategy(enum.Enum):
    RELOCALIZE_RETRY = "relocalize_retry"
    OFFSET_RETRY = "offset_retry"
    RETRY = "retry"
    SKIP = "skip"


def default_strategies() -> dict[FailureKind, Strategy]:
    return {
        FailureKind.HEIGHT_MISMATCH: Strategy.RELOCALIZE_RETRY,
        FailureKind.SEAL_FAIL: Strategy.OFFSET_RETRY,
        FailureKind.DROP_DURING_LIFT: Strategy.RELOCALIZE_RETRY,
        FailureKind.DROP_DURING_CLEAN: Strategy.SKIP,
        FailureKind.CONTACT_LOST: Strategy.RETRY,
        FailureKind.NOT_FLIPPABLE: Strategy.SKIP,
        FailureKind.NO_DETECTION: Strategy.RELOCALIZE_RETRY,
        FailureKind.PLANNER_UNREACHABLE: Strategy.RETRY,
    }


@dataclass
class Policy:
    """What to do on each failure kind, and how often to reattempt a part."""

    max_retries_per_part: int = 2
    strategies: dict[FailureKind, Strategy] = field(default_factory=default_strategies)

    def __post_init__(self):
        if self.max_retries_per_part < 0:
            raise ValueError("max_retries_per_part must be >= 0")
        missing = [k for k in FailureKind if k not in self.strategies]
        if missing:
            raise ValueError(f"policy missing strategies for {missing}")


def select_next_part(
    detections: list[Detection],
    pickable: list[bool] | None = None,
    area_weight: float = 0.5,
    height_weight: float = 0.5,
) -> Detection | None:
    """Pick the next part to decake: prefer large exposed top surfaces that sit
    on top of the clutter. Score = a*(area/max area) + b*(z/max z); ties break
    toward the lower part id. None when nothing is pickable."""
    if pickable is None:
        pickable = [True] * len(detections)
    cands = [d for d, ok in zip(detections, pickable) if ok]
    if not cands:
        return None
    max_area = max(d.exposed_area for d in cands)
    max_z = max(d.centroid[2] for d in cands)
    best = None
    best_key: tuple[float, float] | None = None
    for d in cands:
        area_term = d.exposed_area / max_area if max_area > 0 else 1.0
        z_term = d.centroid[2] / max_z if max_z > 0 else 1.0
        score = area_weight * area_term + height_weight * z_term
        tie_id = d.part_id_hypothesis if d.part_id_hypothesis is not None else math.inf
        key = (-score, tie_id)
        if best_key is None or key < best_key:
            best, best_key = d, key
    return best


def set_brushing_budget(cfg: SimConfig, seconds_per_part: float) -> SimConfig:
    """Rescale the brushing budget coherently: pattern times and the charged
    clean duration. Default is 20 s/part (5 s spiral + 5 s rectircle per face)."""
    if seconds_per_part <= 0.0:
        raise ValueError("brushing budget must be > 0")
    per_pattern = seconds_per_part / 4.0
    cfg.cleaning.spiral_time = per_pattern
    cfg.cleaning.rectircle_time = per_pattern
    cfg.orchestrator.durations.clean = seconds_per_part / 2.0
    return cfg


def _rect_center(rect: list) -> tuple[float, float]:
    return ((rect[0] + rect[2]) / 2.0, (rect[1] + rect[3]) / 2.0)


class DecakeCell:
    """One deterministic run of the cell over a scene."""

    def __init__(
        self,
        scene: SceneState,
        cfg: SimConfig | None = None,
        seed: int = 0,
        policy: Policy | None = None,
        scripted_faults: dict[str, list[str]] | None = None,
    ):
        self.scene = scene
        self.cfg = cfg or SimConfig()
        self.seed = int(seed)
        self.policy = policy or Policy(max_retries_per_part=self.cfg.orchestrator.max_retries)
        self.scripted_faults = {k: list(v) for k, v in (scripted_faults or {}).items()}

        ss = np.random.SeedSequence(self.seed)
        det_ss, act_ss, plan_ss = ss.spawn(3)
        self.detector = DetectorModel.from_config(self.cfg.perception, det_ss)
        self.rng = np.random.default_rng(act_ss)
        self._plan_rng = np.random.default_rng(plan_ss)

        self.suction = SuctionModel.from_config(self.cfg.suction)
        self.removal = RemovalModel.from_config(self.cfg.cleaning)
        self.log = ActionLog()
        self.state = CellState.LOCALIZE_BIN
        self.step_count = 0
        self.halt_diagnostic: str | None = None

        wc = self.cfg.workcell
        self.obstacles = self._build_obstacles()
        self.bounds = Aabb3(tuple(wc.bounds_box[:3]), tuple(wc.bounds_box[3:]))
        self.effector_xyz = (*_rect_center(wc.bin_rect), wc.hover_z)

        self.bin_depth: DepthImage | None = None
        self.bin_detections: list[Detection] = []
        self.flip_depth: DepthImage | None = None
        self.flip_detections: list[Detection] = []
        self.discarded: set[Detection] = set()

        self.retries: dict[int, int] = {}
        self.select_fail_streak = 0
        self.current_part_id: int | None = None
        self.current_detection: Detection | None = None
        self.current_hold_force = 0.0
        self.offset_index = 0

        self.mass_before = {
            p.id: part_total_mass(p, self.cfg.scene.powder_density)
            for p in scene.parts
        }
        n = max(1, len(scene.parts))
        self.step_budget = n * (self.policy.max_retries_per_part + 1) * len(CellState)

    # -- construction helpers ------------------------------------------------

    def _build_obstacles(self) -> tuple[Aabb3, ...]:
        wc = self.cfg.workcell
        xmin, ymin, xmax, ymax = wc.bin_rect
        wt, wh = wc.bin_wall_thickness, wc.bin_wall_height
        walls = [
            Aabb3((xmin - wt, ymin - wt, 0.0), (xmin, ymax + wt, wh)),
            Aabb3((xmax, ymin - wt, 0.0), (xmax + wt, ymax + wt, wh)),
            Aabb3((xmin - wt, ymin - wt, 0.0), (xmax + wt, ymin, wh)),
            Aabb3((xmin - wt, ymax, 0.0), (xmax + wt, ymax + wt, wh)),
        ]
        b = wc.brush_station_box
        f = wc.flipper_box
        walls.append(Aabb3((b[0], b[1], b[2]), (b[3], b[4], b[5])))
        walls.append(Aabb3((f[0], f[1], f[2]), (f[3], f[4], f[5])))
        return tuple(walls)

    def _workspace(self, carrying: bool) -> Workspace:
        clearance = self.cfg.suction.cup_radius
        if carrying and self.current_part_id is not None:
            part = self.scene.part(self.current_part_id)
            clearance += part.spec.bounding_radius
        return Workspace(self.bounds, self.obstacles, clearance)

    def _scripted(self, action: str) -> str | None:
        queue = self.scripted_faults.get(action)
        if queue:
            return queue.pop(0)
        return None

    # -- shared sub-actions ---------------------------------------------------

    def _transit(self, goal: tuple[float, float, float], carrying: bool,
                 charge: bool = True) -> PlannedPath | None:
        seed = int(self._plan_rng.integers(0, 2**63 - 1))
        scripted = self._scripted("plan")
        try:
            if scripted == "Unreachable":
                raise Unreachable("scripted planner fault")
            path = plan(
                self._workspace(carrying), self.effector_xyz, goal, seed=seed,
                max_iters=self.cfg.planner.max_iters, step=self.cfg.planner.step,
                goal_bias=self.cfg.planner.goal_bias,
                shortcut_iters=self.cfg.planner.shortcut_iters,
                resolution=self.cfg.planner.collision_resolution,
            )
        except (Unreachable, InvalidQuery):
            if charge:
                self.log.charge("transit", self.cfg.orchestrator.durations.transit,
                                self.current_part_id, "Unreachable")
            return None
        if charge:
            self.log.charge("transit", self.cfg.orchestrator.durations.transit,
                            self.current_part_id, "ok")
        self.effector_xyz = path.waypoints[-1]
        return path

    def _brush_contact(self) -> ContactModel:
        wc = self.cfg.workcell
        rect = wc.brush_area_rect
        rack_top = wc.brush_station_box[5]

        def surface(x: float, y: float):
            if rect[0] <= x <= rect[2] and rect[1] <= y <= rect[3]:
                return rack_top
            return None

        return ContactModel(surface=surface, stiffness=self.cfg.control.stiffness,
                            damping=self.cfg.control.damping)

    def _do_pick(self, detection: Detection, depth: DepthImage) -> tuple[PickOutcome, int | None]:
        offsets = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        dx, dy = offsets[self.offset_index % len(offsets)]
        r = self.cfg.suction.cup_radius
        scripted = self._scripted("pick")
        if scripted is not None:
            outcome = PickOutcome(scripted)
            if outcome is PickOutcome.HELD:
                part = self.scene.part(detection.part_id_hypothesis)
                part.status = PartStatus.HELD
                self.current_hold_force = self.suction.hold_force(0.5)
                self.log.charge("pick", self.cfg.orchestrator.durations.pick,
                                part.id, outcome.value)
                return outcome, part.id
            self.log.charge("pick", self.cfg.orchestrator.durations.pick,
                            detection.part_id_hypothesis, outcome.value)
            return outcome, detection.part_id_hypothesis
        result = pick(
            self.scene, detection, self.suction,
            height_tol=self.cfg.suction.height_tol,
            contact_offset=(dx * r, dy * r),
            control=self.cfg.control,
            approach_offset=self.cfg.workcell.approach_offset,
            powder_density=self.cfg.scene.powder_density,
            drag_limit=self.cfg.suction.drag_limit,
            drop_prob=self.cfg.suction.drop_during_lift_prob,
            rng=self.rng,
        )
        pid = result.touched_part_id
        charged_to = pid if pid is not None else detection.part_id_hypothesis
        self.log.charge("pick", self.cfg.orchestrator.durations.pick,
                        charged_to, result.outcome.value)
        if result.outcome is PickOutcome.HELD:
            self.current_hold_force = result.hold_force
        return result.outcome, pid

    def _do_clean_face(self, part) -> FailureKind | None:
        cc = self.cfg.cleaning
        wc = self.cfg.workcell
        bx, by = _rect_center(wc.brush_area_rect)
        contact = self._brush_contact()
        scripted = self._scripted("clean")
        self.log.charge("clean", self.cfg.orchestrator.durations.clean,
                        part.id, "ok" if scripted is None else scripted)
        if scripted == "DropDuringClean":
            return FailureKind.DROP_DURING_CLEAN
        if scripted == "ContactLost":
            return FailureKind.CONTACT_LOST
        trajectories = [
            spiral_path((0.0, 0.0), cc.spiral_pitch, cc.spiral_r_max, cc.path_speed,
                        duration=cc.spiral_time, f_set=self.cfg.control.f_set,
                        sample_period=cc.sample_period),
            rectircle_path((0.0, 0.0), cc.rectircle_width, cc.rectircle_height,
                           0.0, cc.path_speed, duration=cc.rectircle_time,
                           f_set=self.cfg.control.f_set,
                           sample_period=cc.sample_period),
        ]
        for traj in trajectories:
            try:
                result = clean(
                    part, traj, self.removal, contact, brush_point=(bx, by),
                    control=self.cfg.control, hold_force=self.current_hold_force,
                    brush_drag_mu=self.cfg.suction.brush_drag_mu,
                    powder_density=self.cfg.scene.powder_density,
                )
            except ContactLost:
                return FailureKind.CONTACT_LOST
            self.scene.dust_collected += result.dust_removed
            if result.outcome is CleanOutcome.DROPPED:
                return FailureKind.DROP_DURING_CLEAN
        return None

    # -- failure handling ------------------------------------------------------

    def _skip_part(self, part_id: int | None, note: str) -> None:
        if part_id is None:
            return
        part = self.scene.part(part_id)
        if part.status is PartStatus.HELD:
            # physically set the part down in the destination, workflow-skipped
            place(self.scene, part, self.scene.destination, rng=self.rng,
                  tries=self.cfg.orchestrator.place_tries)
        part.status = PartStatus.SKIPPED
        self.log.charge("skip", 0.0, part_id, note)
        if self.current_part_id == part_id:
            self.current_part_id = None
            self.current_detection = None

    def _handle_failure(self, kind: FailureKind, part_id: int | None,
                        detection: Detection | None, retry_state: CellState,
                        relocalize_state: CellState) -> CellState:
        # spurious detections are discarded outright; they burn no part retries
        if part_id is None and detection is not None and detection.part_id_hypothesis is None:
            self.discarded.add(detection)
            self.current_detection = None
            return CellState.SELECT_PART
        pid = part_id if part_id is not None else (
            detection.part_id_hypothesis if detection else None)
        if pid is None:
            return relocalize_state
        self.retries[pid] = self.retries.get(pid, 0) + 1
        if self.retries[pid] > self.policy.max_retries_per_part:
            self._skip_part(pid, f"{kind.value}: retries exhausted")
            return CellState.NEXT_OR_FINISH
        strategy = self.policy.strategies[kind]
        if strategy is Strategy.SKIP:
            self._skip_part(pid, kind.value)
            return CellState.NEXT_OR_FINISH
        if strategy is Strategy.OFFSET_RETRY:
            self.offset_index += 1
            return retry_state
        if strategy is Strategy.RETRY:
            return retry_state
        return relocalize_state

    # -- state handlers ---------------------------------------------------------

    def _localize_bin(self) -> CellState:
        self.log.charge("localize", self.cfg.orchestrator.durations.localize,
                        None, "ok")
        self.bin_depth = render_depth(self.scene, self.scene.bin,
                                      resolution=self.cfg.scene.grid_resolution)
        self.bin_detections = detect(self.scene, self.bin_depth, self.detector)
        self.discarded = set()
        if not any(p.status is PartStatus.IN_BIN for p in self.scene.parts):
            return CellState.NEXT_OR_FINISH
        return CellState.SELECT_PART

    def _select_part(self) -> CellState:
        cands: list[Detection] = []
        flags: list[bool] = []
        for det in self.bin_detections:
            if det in self.discarded:
                continue
            pid = det.part_id_hypothesis
            if pid is not None and self.scene.part(pid).status is not PartStatus.IN_BIN:
                continue
            est = estimate_pose(det, self.bin_depth,
                                cup_area=self.suction.cup_area,
                                floating_tolerance=self.cfg.perception.floating_tolerance)
            cands.append(det)
            flags.append(est.pickable)
        chosen = select_next_part(cands, flags,
                                  self.cfg.orchestrator.select_area_weight,
                                  self.cfg.orchestrator.select_height_weight)
        remaining = [p for p in self.scene.parts if p.status is PartStatus.IN_BIN]
        if chosen is None:
            if not remaining:
                return CellState.NEXT_OR_FINISH
            self.select_fail_streak += 1
            if self.select_fail_streak > self.policy.max_retries_per_part:
                for p in remaining:
                    self._skip_part(p.id, "no pickable detection")
                return CellState.NEXT_OR_FINISH
            return CellState.LOCALIZE_BIN
        self.select_fail_streak = 0
        self.current_detection = chosen
        self.current_part_id = chosen.part_id_hypothesis
        self.offset_index = 0
        return CellState.PICK_FROM_BIN

    def _pick_from_bin(self) -> CellState:
        det = self.current_detection
        goal = (det.centroid[0], det.centroid[1], self.cfg.workcell.hover_z)
        if self._transit(goal, carrying=False) is None:
            return self._handle_failure(FailureKind.PLANNER_UNREACHABLE,
                                        det.part_id_hypothesis, det,
                                        CellState.PICK_FROM_BIN,
                                        CellState.LOCALIZE_BIN)
        outcome, touched = self._do_pick(det, self.bin_depth)
        if outcome is PickOutcome.HELD:
            self.current_part_id = touched
            self.retries.setdefault(touched, 0)
            return CellState.CLEAN_FACE_A
        kind = {
            PickOutcome.HEIGHT_MISMATCH: FailureKind.HEIGHT_MISMATCH,
            PickOutcome.SEAL_FAIL: FailureKind.SEAL_FAIL,
            PickOutcome.DROP_DURING_LIFT: FailureKind.DROP_DURING_LIFT,
        }[outcome]
        return self._handle_failure(kind, touched, det,
                                    CellState.PICK_FROM_BIN, CellState.LOCALIZE_BIN)

    def _clean_face(self, next_state: CellState, retry_state: CellState) -> CellState:
        part = self.scene.part(self.current_part_id)
        wc = self.cfg.workcell
        bx, by = _rect_center(wc.brush_area_rect)
        if self._transit((bx, by, wc.hover_z), carrying=True) is None:
            return self._handle_failure(FailureKind.PLANNER_UNREACHABLE, part.id,
                                        None, retry_state, retry_state)
        failure = self._do_clean_face(part)
        if failure is None:
            return next_state
        if failure is FailureKind.DROP_DURING_CLEAN:
            # the part stays where it fell: on the rack
            rack_top = wc.brush_station_box[5]
            part.pose = Pose(bx, by, rack_top, part.pose.yaw)
            part.status = PartStatus.SKIPPED
            self.log.charge("skip", 0.0, part.id, failure.value)
            self.current_part_id = None
            return CellState.NEXT_OR_FINISH
        return self._handle_failure(failure, part.id, None, retry_state, retry_state)

    def _drop_to_flipper(self) -> CellState:
        part = self.scene.part(self.current_part_id)
        wc = self.cfg.workcell
        f = wc.flipper_box
        drop_point = ((f[0] + f[3]) / 2.0, (f[1] + f[4]) / 2.0, wc.hover_z)
        # short hop from the adjacent station; validated but charged inside the drop
        self._transit(drop_point, carrying=True, charge=False)
        scripted = self._scripted("flip")
        try:
            if scripted == "NotFlippable":
                raise NotFlippable("scripted flip fault")
            flip(self.scene, part,
                 flat_threshold=self.cfg.orchestrator.flat_threshold,
                 spill_fraction=self.cfg.scene.spill_fraction,
                 rng=self.rng)
        except NotFlippable:
            self.log.charge("flip_drop", self.cfg.orchestrator.durations.flip_drop,
                            part.id, "NotFlippable")
            return self._handle_failure(FailureKind.NOT_FLIPPABLE, part.id,
                                        None, CellState.DROP_TO_FLIPPER,
                                        CellState.DROP_TO_FLIPPER)
        self.log.charge("flip_drop", self.cfg.orchestrator.durations.flip_drop,
                        part.id, "ok")
        return CellState.RELOCALIZE_ALL

    def _relocalize_all(self) -> CellState:
        self.log.charge("localize", self.cfg.orchestrator.durations.localize,
                        self.current_part_id, "ok")
        self.bin_depth = render_depth(self.scene, self.scene.bin,
                                      resolution=self.cfg.scene.grid_resolution)
        self.bin_detections = detect(self.scene, self.bin_depth, self.detector)
        self.flip_depth = render_depth(self.scene, self.scene.flip_area,
                                       resolution=self.cfg.scene.grid_resolution)
        self.flip_detections = detect(self.scene, self.flip_depth, self.detector)
        self.discarded = set()
        return CellState.PICK_FROM_FLIP_AREA

    def _pick_from_flip_area(self) -> CellState:
        pid = self.current_part_id
        det = next((d for d in self.flip_detections
                    if d.part_id_hypothesis == pid), None)
        pickable = False
        if det is not None:
            est = estimate_pose(det, self.flip_depth,
                                cup_area=self.suction.cup_area,
                                floating_tolerance=self.cfg.perception.floating_tolerance)
            pickable = est.pickable
        if det is None or not pickable:
            return self._handle_failure(FailureKind.NO_DETECTION, pid, None,
                                        CellState.RELOCALIZE_ALL,
                                        CellState.RELOCALIZE_ALL)
        goal = (det.centroid[0], det.centroid[1], self.cfg.workcell.hover_z)
        if self._transit(goal, carrying=False) is None:
            return self._handle_failure(FailureKind.PLANNER_UNREACHABLE, pid, det,
                                        CellState.PICK_FROM_FLIP_AREA,
                                        CellState.RELOCALIZE_ALL)
        outcome, touched = self._do_pick(det, self.flip_depth)
        if outcome is PickOutcome.HELD:
            self.current_part_id = touched
            return CellState.CLEAN_FACE_B
        kind = {
            PickOutcome.HEIGHT_MISMATCH: FailureKind.HEIGHT_MISMATCH,
            PickOutcome.SEAL_FAIL: FailureKind.SEAL_FAIL,
            PickOutcome.DROP_DURING_LIFT: FailureKind.DROP_DURING_LIFT,
        }[outcome]
        return self._handle_failure(kind, touched if touched is not None else pid,
                                    det, CellState.PICK_FROM_FLIP_AREA,
                                    CellState.RELOCALIZE_ALL)

    def _place_done(self) -> CellState:
        part = self.scene.part(self.current_part_id)
        wc = self.cfg.workcell
        cx, cy = self.scene.destination.centroid()
        if self._transit((cx, cy, wc.hover_z), carrying=True) is None:
            return self._handle_failure(FailureKind.PLANNER_UNREACHABLE, part.id,
                                        None, CellState.PLACE_DONE,
                                        CellState.PLACE_DONE)
        place(self.scene, part, self.scene.destination, rng=self.rng,
              tries=self.cfg.orchestrator.place_tries)
        self.log.charge("place", self.cfg.orchestrator.durations.place,
                        part.id, "ok")
        self.current_part_id = None
        self.current_detection = None
        return CellState.NEXT_OR_FINISH

    def _next_or_finish(self) -> CellState:
        if any(p.status is PartStatus.IN_BIN for p in self.scene.parts):
            return CellState.SELECT_PART
        return CellState.HALT

    # -- the machine -------------------------------------------------------------

    def step(self) -> CellState:
        """Execute the module bound to the current state and advance."""
        if self.state is CellState.HALT:
            return self.state
        self.step_count += 1
        if self.step_count > self.step_budget:
            self.halt_diagnostic = (
                f"step budget {self.step_budget} exceeded in {self.state.value}"
            )
            self.state = CellState.HALT
            return self.state
        handlers = {
            CellState.LOCALIZE_BIN: self._localize_bin,
            CellState.SELECT_PART: self._select_part,
            CellState.PICK_FROM_BIN: self._pick_from_bin,
            CellState.CLEAN_FACE_A: lambda: self._clean_face(
                CellState.DROP_TO_FLIPPER, CellState.CLEAN_FACE_A),
            CellState.DROP_TO_FLIPPER: self._drop_to_flipper,
            CellState.RELOCALIZE_ALL: self._relocalize_all,
            CellState.PICK_FROM_FLIP_AREA: self._pick_from_flip_area,
            CellState.CLEAN_FACE_B: lambda: self._clean_face(
                CellState.PLACE_DONE, CellState.CLEAN_FACE_B),
            CellState.PLACE_DONE: self._place_done,
            CellState.NEXT_OR_FINISH: self._next_or_finish,
        }
        self.state = handlers[self.state]()
        return self.state

    def run(self) -> RunReport:
        while self.state is not CellState.HALT:
            self.step()
        rows = []
        for p in sorted(self.scene.parts, key=lambda q: q.id):
            after = part_total_mass(p, self.cfg.scene.powder_density)
            before = self.mass_before[p.id]
            rows.append(PartRow(
                part_id=p.id,
                mass_before_g=before,
                mass_after_g=after,
                removal_pct=removal_percent(before, after, p.spec.clean_mass),
                cycle_time_s=self.log.part_time(p.id),
                outcome="Done" if p.status is PartStatus.DONE else "Skipped",
            ))
        return RunReport(
            seed=self.seed,
            rows=rows,
            log=self.log,
            dust_collected=self.scene.dust_collected,
            flip_area_spill=self.scene.flip_area_spill,
        )


def run(scene: SceneState, cfg: SimConfig | None = None, seed: int = 0,
        policy: Policy | None = None,
        scripted_faults: dict[str, list[str]] | None = None) -> RunReport:
    """Process every part in the scene through the full pipeline and report."""
    cell = DecakeCell(scene, cfg, seed, policy, scripted_faults)
    return cell.run()


def run_batch(scenes_and_seeds: list[tuple[SceneState, int]],
              cfg: SimConfig | None = None,
              max_workers: int | None = None) -> list[RunReport]:
    """Run independent scenarios, possibly concurrently; reports come back in
    ascending seed order so batch output is deterministic."""
    ordered = sorted(scenes_and_seeds, key=lambda t: t[1])
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run, scene, cfg, seed) for scene, seed in ordered]
        return [f.result() for f in futures]
