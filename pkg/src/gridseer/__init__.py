"""gridseer: data-center telemetry forecasting models packaged as portable,
hash-verified bundles and exchanged through a registry, so models travel to
the data instead of data to the models."""

__version__ = "0.1.0"
