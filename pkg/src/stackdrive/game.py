"""Three-person, three-level Stackelberg lane-choice game.

The deciding driver (P1, the leader) builds payoff tensors for itself and
for the two followers it sees in adjacent lanes (P2 and P3) from its own
perception, then solves the game by backward induction. Payoffs are in
metres: a headway term capped by the visibility distance plus a
lane-change feasibility term against the target-lane follower.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .driver_control import DriverDisposition
from .perception import NeighborEntry, NeighborView

logger = logging.getLogger(__name__)

LANE_COUNT = 3


class Strategy(Enum):
    """Lane move: L toward lane 1, S stay, R toward lane 3."""

    L = "L"
    S = "S"
    R = "R"

    @property
    def shift(self) -> int:
        return {"L": -1, "S": 0, "R": 1}[self.value]

    @property
    def index(self) -> int:
        return STRATEGIES.index(self)


STRATEGIES: Tuple[Strategy, ...] = (Strategy.L, Strategy.S, Strategy.R)

# Tie-break priority: stay, then toward lane 1, then toward lane 3.
TIE_BREAK_ORDER: Tuple[Strategy, ...] = (Strategy.S, Strategy.L, Strategy.R)


class PlayerRole(Enum):
    LEADER = 1
    FIRST_FOLLOWER = 2
    SECOND_FOLLOWER = 3


@dataclass(frozen=True)
class GameSettings:
    """Utility and solver parameters."""

    sentinel: float = -1.0e6
    sufficient_multiple: float = 2.0  # c_suf, multiples of the body diagonal
    tie_tolerance: float = 2.5  # m
    credit_positive_margin: bool = True
    attributed_q: float = 0.5

    def validate(self) -> None:
        if self.sentinel >= -1.0e3:
            raise ValueError("game.sentinel must be a large negative number")
        if self.sufficient_multiple < 0:
            raise ValueError("game.sufficient_multiple must be non-negative")
        if self.tie_tolerance < 0:
            raise ValueError("game.tie_tolerance must be non-negative")
        if not 0.0 <= self.attributed_q <= 1.0:
            raise ValueError("game.attributed_q must lie in [0, 1]")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class Player:
    """A vehicle taking part in the game, located relative to P1."""

    vehicle_id: Optional[int]
    lane: int
    offset: float  # m, signed, positive ahead of P1
    speed: float  # m/s, relative to P1


@dataclass(frozen=True)
class Roles:
    """Vehicles filling the P2 and P3 slots; either may be absent."""

    first_follower: Optional[Player] = None
    second_follower: Optional[Player] = None

    @property
    def players(self) -> List[Optional[Player]]:
        return [self.first_follower, self.second_follower]


@dataclass
class PayoffTensor:
    """U^i(g1, g2, g3) for the three players, shape (3, 3, 3, 3).

    The first axis is the player; the rest index STRATEGIES. Absent
    players leave every payoff constant along their own axis.
    """

    payoffs: np.ndarray
    leader_lane: int
    player_count: int = 3

    def __post_init__(self):
        if self.payoffs.shape != (3, 3, 3, 3):
            raise ValueError(
                f"payoff tensor must have shape (3, 3, 3, 3), got {self.payoffs.shape}"
            )
        if not np.all(np.isfinite(self.payoffs)):
            raise ValueError("payoff tensor must be finite")

    def payoff(self, role: PlayerRole, profile: Sequence[Strategy]) -> float:
        g1, g2, g3 = (s.index for s in profile)
        return float(self.payoffs[role.value - 1, g1, g2, g3])


@dataclass(frozen=True)
class GameSolution:
    """Equilibrium strategies and the leader's payoff there."""

    leader: Strategy
    first_follower: Strategy
    second_follower: Strategy
    leader_payoff: float

    @property
    def profile(self) -> Tuple[Strategy, Strategy, Strategy]:
        return (self.leader, self.first_follower, self.second_follower)


def headway_utility(
    distance: Optional[float], visibility: float, alpha: float
) -> float:
    """U_h = min(d_r, alpha(q) d_v); without a leader the cap applies.

    Args:
        distance: Gap to the leader (m), or None if no leader is in view
        visibility: d_v (m)
        alpha: alpha(q)
    """
    cap = alpha * visibility
    if distance is None:
        return cap
    return min(distance, cap)


def lane_change_utility(
    distance: float,
    closing_speed: float,
    prediction_time: float,
    sufficient_distance: float,
) -> float:
    """U_l = d_r - v_r T(q) - D_suf, with v_r positive while the gap closes."""
    return distance - closing_speed * prediction_time - sufficient_distance


def sufficient_distance(settings: GameSettings, diagonal: float) -> float:
    """D_suf as a multiple of the body diagonal."""
    return settings.sufficient_multiple * diagonal


def _lane_term(value: float, settings: GameSettings) -> float:
    if settings.credit_positive_margin:
        return value
    return min(value, 0.0)


def apply_tie_breaks(candidates: Iterable[Strategy], player_lane: int) -> Strategy:
    """Pick one strategy from a tied set: stay first, then toward lane 1.

    Args:
        candidates: Non-empty set of equally good strategies
        player_lane: Lane of the deciding player
    """
    if not 1 <= player_lane <= LANE_COUNT:
        raise ValueError(f"lane must lie in 1..{LANE_COUNT}, got {player_lane}")
    pool = set(candidates)
    if not pool:
        raise ValueError("tie-break needs at least one candidate")
    for strategy in TIE_BREAK_ORDER:
        if strategy in pool:
            return strategy
    raise ValueError(f"unknown strategies {pool}")


def target_lane(lane: int, strategy: Strategy) -> Optional[int]:
    """Lane after the move, or None if it leaves the road."""
    lane = lane + strategy.shift
    return lane if 1 <= lane <= LANE_COUNT else None


def matrix_space(
    lanes: Sequence[Optional[int]], profile: Sequence[Strategy]
) -> Tuple[Optional[int], ...]:
    """Lanes occupied after a joint move; None marks the off-road boundary regions.

    Absent players (lane None) stay None.
    """
    return tuple(
        None if lane is None else target_lane(lane, strategy)
        for lane, strategy in zip(lanes, profile)
    )


def total_utility(
    strategy: Strategy,
    view: NeighborView,
    disposition: DriverDisposition,
    settings: GameSettings,
    diagonal: float,
) -> float:
    """U = U_h + U_l for one lane choice of the observer.

    Staying scores the current lane's headway only. A lane change scores
    the target lane's headway plus the lane-change term against the
    target lane's follower (zero without one).
    """
    lane = target_lane(view.lane, strategy)
    if lane is None:
        return settings.sentinel
    leader = view.leader(lane)
    u_h = headway_utility(
        None if leader is None else leader.gap,
        view.visibility,
        disposition.visibility_scale,
    )
    if strategy is Strategy.S:
        return u_h
    follower = view.follower(lane)
    if follower is None:
        return u_h
    u_l = lane_change_utility(
        follower.gap,
        follower.closing_speed,
        disposition.prediction_time,
        sufficient_distance(settings, diagonal),
    )
    return u_h + _lane_term(u_l, settings)


def _player_from_follower(lane: int, entry: NeighborEntry) -> Player:
    return Player(entry.vehicle_id, lane, entry.distance, entry.closing_speed)


def assign_roles(view: NeighborView) -> Roles:
    """Fill P2 and P3 with the followers P1 competes with.

    From the middle lane, P2 is the nearer of the two adjacent lanes'
    nearest followers and P3 the other. From an edge lane, P2 is the
    adjacent lane's nearest follower and P3 the one behind it.
    """
    adjacent = [
        lane for lane in (view.lane - 1, view.lane + 1) if 1 <= lane <= LANE_COUNT
    ]
    candidates = [
        _player_from_follower(lane, view.followers[lane])
        for lane in adjacent
        if lane in view.followers
    ]
    candidates.sort(key=lambda p: (-p.offset, p.lane))
    if len(adjacent) == 1:
        lane = adjacent[0]
        second = view.second_followers.get(lane)
        if candidates and second is not None:
            candidates.append(_player_from_follower(lane, second))
    first = candidates[0] if candidates else None
    second_player = candidates[1] if len(candidates) > 1 else None
    return Roles(first, second_player)


@dataclass(frozen=True)
class _SceneVehicle:
    vehicle_id: Optional[int]
    lane: int
    offset: float
    speed: float
    player: Optional[int] = None


def _scene(view: NeighborView, roles: Roles) -> List[_SceneVehicle]:
    """P1 and every vehicle in P1's view, in P1's moving frame."""
    players = {
        p.vehicle_id: index + 1
        for index, p in enumerate(roles.players)
        if p is not None
    }
    scene = [_SceneVehicle(None, view.lane, 0.0, 0.0, player=0)]
    seen = set()
    for lane, entry in sorted(view.leaders.items()):
        scene.append(
            _SceneVehicle(entry.vehicle_id, lane, entry.distance, -entry.closing_speed)
        )
        seen.add(entry.vehicle_id)
    for table in (view.followers, view.second_followers):
        for lane, entry in sorted(table.items()):
            if entry.vehicle_id in seen:
                continue
            seen.add(entry.vehicle_id)
            scene.append(
                _SceneVehicle(
                    entry.vehicle_id,
                    lane,
                    entry.distance,
                    entry.closing_speed,
                    player=players.get(entry.vehicle_id),
                )
            )
    return scene


class _Evaluator:
    """Payoff of one player for one joint move over a fixed scene."""

    def __init__(
        self,
        scene: List[_SceneVehicle],
        dispositions: Sequence[DriverDisposition],
        settings: GameSettings,
        visibility: float,
        horizon: float,
        d_suf: float,
    ):
        self.scene = scene
        self.dispositions = dispositions
        self.settings = settings
        self.visibility = visibility
        self.projected = [v.offset + v.speed * horizon for v in scene]
        self.d_suf = d_suf

    def payoff(self, player: int, moves: Dict[int, Strategy]) -> float:
        index = next(i for i, v in enumerate(self.scene) if v.player == player)
        me = self.scene[index]
        strategy = moves.get(player, Strategy.S)
        lane = target_lane(me.lane, strategy)
        if lane is None:
            return self.settings.sentinel

        def lane_after(v: _SceneVehicle) -> int:
            if v.player is None:
                return v.lane
            return target_lane(v.lane, moves.get(v.player, Strategy.S)) or v.lane

        others = [(i, v) for i, v in enumerate(self.scene) if i != index]
        disposition = self.dispositions[player]

        ahead = [
            (i, v) for i, v in others if lane_after(v) == lane and v.offset > me.offset
        ]
        if ahead:
            i, _ = min(ahead, key=lambda item: item[1].offset)
            gap: Optional[float] = max(self.projected[i] - self.projected[index], 0.0)
        else:
            gap = None
        u_h = headway_utility(gap, self.visibility, disposition.visibility_scale)
        if strategy is Strategy.S:
            return u_h

        # Competitors: the target lane's follower before and after the moves.
        competitors = []
        for lane_of_vehicle in (lambda v: v.lane, lane_after):
            behind = [
                (i, v)
                for i, v in others
                if lane_of_vehicle(v) == lane and v.offset < me.offset
            ]
            if behind:
                competitors.append(max(behind, key=lambda item: item[1].offset))
        if not competitors:
            return u_h
        # The lane-change term does its own prediction from the current gap.
        u_l = min(
            lane_change_utility(
                me.offset - v.offset,
                v.speed - me.speed,
                disposition.prediction_time,
                self.d_suf,
            )
            for _, v in competitors
        )
        return u_h + _lane_term(u_l, self.settings)


def build_payoff_tensor(
    view: NeighborView,
    disposition: DriverDisposition,
    settings: GameSettings,
    diagonal: float,
    roles: Optional[Roles] = None,
) -> PayoffTensor:
    """Payoff tensors of P1, P2 and P3 as P1 perceives them.

    Followers are given the attributed disposition. Every joint move is
    scored on the scene projected over P1's prediction time at constant
    relative speeds; moves off the road get the sentinel.

    Args:
        view: P1's (possibly noisy) view
        disposition: P1's disposition
        settings: Game settings
        diagonal: Body diagonal (m), for D_suf
        roles: Pre-assigned roles; assigned from the view when omitted
    """
    if roles is None:
        roles = assign_roles(view)
    attributed = DriverDisposition(settings.attributed_q, disposition.mapping)
    evaluator = _Evaluator(
        _scene(view, roles),
        [disposition, attributed, attributed],
        settings,
        view.visibility,
        disposition.prediction_time,
        sufficient_distance(settings, diagonal),
    )
    present = [0] + [i + 1 for i, p in enumerate(roles.players) if p is not None]
    payoffs = np.zeros((3, 3, 3, 3))
    for g1 in STRATEGIES:
        for g2 in STRATEGIES:
            for g3 in STRATEGIES:
                moves = {0: g1, 1: g2, 2: g3}
                moves = {p: s for p, s in moves.items() if p in present}
                cell = (g1.index, g2.index, g3.index)
                for player in (0, 1, 2):
                    if player in present:
                        payoffs[(player,) + cell] = evaluator.payoff(player, moves)
    return PayoffTensor(payoffs, view.lane, player_count=len(present))


def _best_set(values: Dict[Strategy, float], tolerance: float) -> List[Strategy]:
    best = max(values.values())
    return [s for s in STRATEGIES if values[s] >= best - tolerance]


def follower_responses(
    tensor: PayoffTensor, g1: Strategy, tolerance: float = 0.0
) -> Tuple[List[Strategy], Dict[Strategy, List[Strategy]]]:
    """Response sets S2(g1) and S3(g1, g2) for every g2."""
    u2, u3 = tensor.payoffs[1], tensor.payoffs[2]
    s3 = {
        g2: _best_set(
            {g3: u3[g1.index, g2.index, g3.index] for g3 in STRATEGIES}, tolerance
        )
        for g2 in STRATEGIES
    }
    secure2 = {
        g2: min(u2[g1.index, g2.index, g3.index] for g3 in s3[g2]) for g2 in STRATEGIES
    }
    return _best_set(secure2, tolerance), s3


def solve_stackelberg(
    tensor: PayoffTensor,
    tolerance: float = 0.0,
    lanes: Optional[Sequence[int]] = None,
) -> GameSolution:
    """Backward induction over tie-broken follower responses.

    P2 secures itself against P3's tied responses. The leader scores each
    of its moves at the followers' tie-broken replies.

    Args:
        tensor: Payoff tensors
        tolerance: Payoffs within this band of the best count as tied
        lanes: Lanes of P1, P2, P3 for tie-breaking; P1's lane by default

    Returns:
        The tie-broken equilibrium
    """
    if lanes is None:
        lanes = (tensor.leader_lane,) * 3
    u1 = tensor.payoffs[0]
    value: Dict[Strategy, float] = {}
    replies: Dict[Strategy, Tuple[Strategy, Strategy]] = {}
    for g1 in STRATEGIES:
        s2, s3 = follower_responses(tensor, g1, tolerance)
        first = apply_tie_breaks(s2, lanes[1])
        second = apply_tie_breaks(s3[first], lanes[2])
        replies[g1] = (first, second)
        value[g1] = float(u1[g1.index, first.index, second.index])
    leader = apply_tie_breaks(_best_set(value, tolerance), lanes[0])
    first, second = replies[leader]
    solution = GameSolution(leader, first, second, value[leader])
    logger.debug(
        "stackelberg solution %s with leader payoff %.2f",
        "".join(s.value for s in solution.profile),
        solution.leader_payoff,
    )
    return solution
