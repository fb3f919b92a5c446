"""Built-in quasi-static simulator, synthetic sensor, scenarios and the episode runner."""
