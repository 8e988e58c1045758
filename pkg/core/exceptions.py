class FogFedError(Exception):
    """Base class for simulator errors"""


class DatasetError(FogFedError):
    """Dataset files or sizes are invalid"""


class ArchitectureError(FogFedError):
    """Layer shapes do not resolve for the given input"""


class TrainingDivergedError(FogFedError):
    """Loss or weights became NaN/Inf during local training"""

    def __init__(self, epoch, batch, detail):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {detail}")


class SerializationError(FogFedError):
    """Weight payload cannot be decoded"""


class AggregationError(FogFedError):
    """Local updates cannot be fused"""


class LedgerError(FogFedError):
    """Base class for hyperledger errors"""


class ChainFormatError(LedgerError):
    """Chain file is unreadable or garbled"""


class InvalidChainError(LedgerError):
    """Chain fails hash or link verification"""

    def __init__(self, at_index, message=None):
        self.at_index = at_index
        super().__init__(message or f"chain invalid at block {at_index}")


class ConfigError(FogFedError):
    """Configuration document is invalid"""


class SimulationError(FogFedError):
    """A federated round could not complete"""
