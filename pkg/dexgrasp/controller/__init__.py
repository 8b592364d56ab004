"""
Low-level diffusion controller: schedules, DiT denoiser, fusion, sampling,
policy, receding-horizon rollout and checkpoints.
"""
