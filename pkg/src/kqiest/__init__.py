"""KQI estimation for 360-video sessions from network KPIs."""

__version__ = "0.1.0"
