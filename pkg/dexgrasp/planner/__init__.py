"""
High-level planner: workspace cropping, the four VLM sub-tasks, response
parsing and the grasp-attempt state machine.
"""
