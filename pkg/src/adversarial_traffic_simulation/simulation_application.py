import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from aws_lambda_powertools import Logger

from adversarial_traffic_simulation.bicycle import rollout, sample_controls
from adversarial_traffic_simulation.configuration import SimConfig, OpponentPolicy
from adversarial_traffic_simulation.errors import EndOfLogError, PathLostError, EmptyCorpusError, AdvSimError
from adversarial_traffic_simulation.geometry import trajectory_collision, boxes_overlap
from adversarial_traffic_simulation.model import Scenario, ReplanRecord, TrajectoryHypothesis, EpisodeResult, \
    EpisodeStatus, TerminationReason, CollisionReport, Pose, AgentTrack, ScorerModel, grid_time
from adversarial_traffic_simulation.opponent import score_and_select
from adversarial_traffic_simulation.planners import build_planner
from adversarial_traffic_simulation.scenario import slice_observation, truncate, append_states
from adversarial_traffic_simulation.services import TrajectoryPredictor


def scenario_seed(seed: int, scenario_id: str | None) -> int:
    """Seed of one episode, independent of batch order and parallelism."""
    digest = hashlib.sha256(f"{seed}:{scenario_id}".encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big')


def factorized_risk(probabilities: np.ndarray, reaction_probabilities: np.ndarray,
                    collisions: np.ndarray) -> np.ndarray:
    """
    risk_j = P_j * sum_k Q_jk * Coll_jk

    :param probabilities: (N1,) opponent hypothesis probabilities
    :param reaction_probabilities: (N1, N2) ego reaction probabilities, one row per opponent hypothesis
    :param collisions: (N1, N2) 1 where the pair collides
    """
    return np.asarray(probabilities) * np.sum(np.asarray(reaction_probabilities) * np.asarray(collisions), axis=1)


def choose_hypothesis(probabilities: np.ndarray, reaction_probabilities: np.ndarray,
                      collisions: np.ndarray) -> tuple[int, np.ndarray, bool]:
    """
    Index of the riskiest opponent hypothesis (lowest index on ties). Without any colliding pair the opponent
    hypothesis of the most likely (j, k) pair is returned and the fallback flag is set.
    """
    risks = factorized_risk(probabilities, reaction_probabilities, collisions)

    if np.any(risks > 0):
        return int(np.argmax(risks)), risks, False

    joint = np.asarray(probabilities)[:, None] * np.asarray(reaction_probabilities)
    return int(np.unravel_index(np.argmax(joint), joint.shape)[0]), risks, True


def _constant_velocity_pose(pose: Pose, t: float) -> Pose:
    elapsed = t - pose.t
    return Pose(t=t, x=pose.x + pose.speed * math.cos(pose.heading) * elapsed,
                y=pose.y + pose.speed * math.sin(pose.heading) * elapsed, heading=pose.heading, speed=pose.speed)


class AdversarialSimulationApplication:
    def __init__(self, predictor: TrajectoryPredictor, scorer_model: ScorerModel, logger: Logger):
        self.predictor = predictor
        self.scorer_model = scorer_model
        self.logger = logger

    def plan_adversarial_trajectory(self, observation: Scenario, opponent_id: str, ego_id: str,
                                    config: SimConfig) -> ReplanRecord:
        marginal = self.predictor.predict_marginal(observation, opponent_id, config.predictor.with_hypotheses(config.n1))
        reaction_config = config.predictor.with_hypotheses(config.n2)
        ego = observation.track(ego_id)

        reaction_probabilities = []
        collisions = []

        for hypothesis in marginal.hypotheses:
            reactions = self.predictor.predict_conditional(observation, ego_id, hypothesis, reaction_config)
            reaction_probabilities.append(reactions.probabilities)
            collisions.append([
                trajectory_collision(hypothesis, reaction, (marginal.length, marginal.width), ego.extent).occurred
                for reaction in reactions.hypotheses
            ])

        index, risks, fallback = choose_hypothesis(marginal.probabilities, np.array(reaction_probabilities),
                                                   np.array(collisions, dtype=float))

        self.logger.debug(f"replan at t={observation.ego.last.t}: opponent {opponent_id} risks {risks.tolist()}, "
                          f"chose hypothesis {index}")

        return ReplanRecord(
            time=observation.ego.last.t,
            chosen_index=index,
            risk=float(risks[index]),
            risks=tuple(float(risk) for risk in risks),
            used_fallback=fallback,
            prediction_fallback=marginal.fallback,
            trajectory=marginal.hypotheses[index],
        )

    def search_random_trajectory(self, observation: Scenario, opponent_id: str, ego_id: str, config: SimConfig,
                                 rng: np.random.Generator) -> ReplanRecord:
        """
        Random search baseline: samples bicycle controls for the opponent and keeps the rollout that hits the ego,
        extrapolated at constant velocity, earliest. Without a hit the closest approach decides.
        """
        dt = observation.dt
        steps = max(1, round(observation.future_horizon / dt))
        opponent = observation.track(opponent_id)
        ego = observation.track(ego_id)

        candidates = rollout(opponent.last, sample_controls(config.search, rng), dt, steps, config.search)

        elapsed = dt * np.arange(1, steps + 1)
        ego_positions = ego.last.position + elapsed[:, None] * ego.last.velocity
        ego_headings = np.full(steps, ego.last.heading)

        overlap = boxes_overlap(candidates.positions, candidates.headings, opponent.extent,
                                ego_positions[None], ego_headings[None], ego.extent)
        hits = overlap.any(axis=1)
        risks = hits.astype(float)

        if hits.any():
            first_contact = np.where(hits, np.argmax(overlap, axis=1), steps)
            index = int(np.argmin(first_contact))
        else:
            gaps = np.linalg.norm(candidates.positions - ego_positions[None], axis=-1).min(axis=1)
            index = int(np.argmin(gaps))

        self.logger.debug(f"random search at t={observation.ego.last.t}: {int(hits.sum())} of {len(hits)} rollouts "
                          f"hit the ego, chose rollout {index}")

        return ReplanRecord(
            time=observation.ego.last.t,
            chosen_index=index,
            risk=float(risks[index]),
            risks=tuple(float(risk) for risk in risks),
            used_fallback=not bool(hits.any()),
            trajectory=candidates.hypothesis(index, opponent_id),
        )

    def select_adversarial_trajectory(self, observation: Scenario, opponent_id: str, ego_id: str,
                                      config: SimConfig) -> TrajectoryHypothesis:
        return self.plan_adversarial_trajectory(observation, opponent_id, ego_id, config).trajectory

    @staticmethod
    def episode_start(scenario: Scenario, config: SimConfig) -> float:
        if config.start_time is not None:
            return scenario.snap(config.start_time)
        return scenario.snap(scenario.ego.first.t + scenario.history_horizon)

    def run_episode(self, scenario: Scenario, config: SimConfig, seed: int | None = None) -> EpisodeResult:
        started = time.perf_counter()
        seed = config.seed if seed is None else seed

        dt = scenario.dt
        horizon = config.future_horizon if config.future_horizon is not None else scenario.future_horizon
        t_start = self.episode_start(scenario, config)
        start_step = round(t_start / dt)
        replan_interval = config.replan_interval_steps(dt)
        adversarial = config.opponent_policy != OpponentPolicy.REPLAY
        search_rng = np.random.default_rng(seed)

        opponent = score_and_select(slice_observation(scenario, t_start), self.scorer_model, config.selection,
                                    config.temperature, seed)
        opponent_id = opponent.selected
        self.logger.info(f"scenario {scenario.scenario_id}: selected opponent {opponent_id} from scores "
                         f"{opponent.scores}")

        planner = build_planner(scenario, config.planner, self.logger)
        state = truncate(scenario, t_start)
        replans: list[ReplanRecord] = []
        plan_exhausted = False

        status = EpisodeStatus.COMPLETED
        termination = TerminationReason.HORIZON
        collision = CollisionReport.none()

        for step in range(round(horizon / dt)):
            t_now = grid_time(start_step + step, dt)
            t_next = grid_time(start_step + step + 1, dt)

            if adversarial and (step == 0 or (replan_interval is not None and step % replan_interval == 0)):
                observation = slice_observation(state, t_now).model_copy(update={'future_horizon': horizon})
                if config.opponent_policy == OpponentPolicy.RANDOM_SEARCH:
                    replans.append(self.search_random_trajectory(observation, opponent_id, scenario.ego_id, config,
                                                                 search_rng))
                else:
                    replans.append(self.plan_adversarial_trajectory(observation, opponent_id, scenario.ego_id,
                                                                    config))

            try:
                ego_pose = planner.step(state, t_now)
            except EndOfLogError as e:
                self.logger.info(f"scenario {scenario.scenario_id}: {e}")
                termination = TerminationReason.END_OF_LOG
                break
            except PathLostError as e:
                self.logger.warning(f"scenario {scenario.scenario_id}: {e}")
                status = EpisodeStatus.INVALID
                termination = TerminationReason.PATH_LOST
                break

            poses = {scenario.ego_id: ego_pose}

            for track in scenario.surrounding_tracks:
                if track.agent_id == opponent_id and adversarial:
                    continue
                pose = track.state_at(t_next)
                if pose is not None:
                    poses[track.agent_id] = pose

            if adversarial:
                pose = replans[-1].trajectory.pose_at(t_next)
                if pose is None:
                    if not plan_exhausted:
                        self.logger.warning(f"scenario {scenario.scenario_id}: plan of opponent {opponent_id} "
                                            f"exhausted at t={t_next}, holding constant velocity")
                    plan_exhausted = True
                    pose = _constant_velocity_pose(state.track(opponent_id).last, t_next)
                poses[opponent_id] = pose

            state = append_states(state, poses, templates=scenario)
            collision = self._collision(state, poses, opponent_id, t_next)

            if collision.occurred:
                termination = TerminationReason.COLLISION
                break

        self.logger.info(f"scenario {scenario.scenario_id}: episode ended by {termination.value}, "
                         f"collision={collision.occurred}")

        return EpisodeResult(
            scenario_id=scenario.scenario_id,
            status=status,
            termination=termination,
            seed=seed,
            start_time=t_start,
            collision=collision,
            opponent_id=opponent_id,
            opponent_scores=opponent.scores,
            replans=tuple(replans),
            ego_track=self._simulated_track(state, scenario.ego_id, t_start),
            opponent_track=self._simulated_track(state, opponent_id, t_start),
            generation_time=time.perf_counter() - started,
            plan_exhausted=plan_exhausted,
        )

    @staticmethod
    def _simulated_track(state: Scenario, agent_id: str, t_start: float) -> AgentTrack | None:
        if not state.has_agent(agent_id):
            return None

        track = state.track(agent_id)
        states = track.between(t_start, track.last.t)

        return track.with_states(states) if states else None

    @staticmethod
    def _collision(state: Scenario, poses: dict[str, Pose], opponent_id: str, t: float) -> CollisionReport:
        """Ego against every agent at t; a contact with the opponent is reported before any other."""
        ego_id = state.ego_id
        ego = state.ego
        ego_pose = poses[ego_id]

        contacts = []
        for agent_id in sorted(poses.keys() - {ego_id}):
            track = state.track(agent_id)
            pose = poses[agent_id]
            if boxes_overlap(ego_pose.position, ego_pose.heading, ego.extent, pose.position, pose.heading,
                             track.extent):
                contacts.append(agent_id)

        if not contacts:
            return CollisionReport.none()

        agent_id = opponent_id if opponent_id in contacts else contacts[0]
        relative_speed = float(np.linalg.norm(ego_pose.velocity - poses[agent_id].velocity))

        return CollisionReport(occurred=True, time=t, relative_speed=relative_speed, agent_id=agent_id,
                               with_opponent=agent_id == opponent_id)

    def _run_safely(self, scenario: Scenario, config: SimConfig) -> EpisodeResult:
        seed = scenario_seed(config.seed, scenario.scenario_id)

        try:
            return self.run_episode(scenario, config, seed)
        except (AdvSimError, ValueError) as e:
            self.logger.error(f"scenario {scenario.scenario_id} failed: {e}")

            return EpisodeResult(
                scenario_id=scenario.scenario_id,
                status=EpisodeStatus.FAILED,
                termination=TerminationReason.FAILED,
                seed=seed,
                start_time=scenario.ego.first.t + scenario.history_horizon,
                error=str(e),
            )

    def run_batch(self, corpus: list[Scenario], config: SimConfig, jobs: int = 1) -> list[EpisodeResult]:
        """Order-preserving; per-scenario seeds make the results independent of jobs."""
        if not corpus:
            raise EmptyCorpusError("cannot run an empty corpus")

        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(lambda scenario: self._run_safely(scenario, config), corpus))

        failed = sum(1 for result in results if result.status == EpisodeStatus.FAILED)
        if failed:
            self.logger.warning(f"{failed} of {len(results)} episodes failed")

        return results
