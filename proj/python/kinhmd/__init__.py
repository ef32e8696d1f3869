"""Head-based force-feedback motion cueing engine."""

from ._kinhmd import (
    ConfigError,
    DomainError,
    Error,
    HardFault,
    PacketError,
    ParseError,
    StimulusPattern,
    calibrate_gain,
    clamp_force,
    encode_packet,
    eval_pattern,
    five_number,
    kill_transition,
    limit_jerk,
    load_config,
    parse_packet,
    plan_trials,
    read_log,
    render_force,
    run,
    run_session,
    simulate_force,
    synthesize_trace,
    torque_policy,
    write_stimulus,
)

__all__ = [name for name in dir() if not name.startswith("_")]
