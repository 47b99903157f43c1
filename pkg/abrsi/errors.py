# abrsi/errors.py
"""
Hiérarchie d'exceptions du projet. Toutes les erreurs métier dérivent de
AbrsiError pour que la CLI puisse les intercepter en un seul point.
"""


class AbrsiError(Exception):
    """Racine de toutes les erreurs ABRSI."""


class DimensionMismatchError(AbrsiError):
    def __init__(self, operation, left_shape, right_shape):
        self.operation = operation
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)
        super().__init__(
            f"{operation}: dimensions incompatibles {self.left_shape} et {self.right_shape}"
        )


class NonFiniteError(AbrsiError):
    """Une matrice contient NaN ou Inf."""


class SvdConvergenceError(AbrsiError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (résidu: {residual})")


class ClusteringError(AbrsiError):
    pass


class DataError(AbrsiError):
    pass


class MissingColumnError(DataError):
    def __init__(self, path, columns):
        self.path = str(path)
        self.columns = list(columns)
        super().__init__(f"Colonnes absentes de '{self.path}': {', '.join(self.columns)}")


class EmptyDatasetError(DataError):
    pass


class ConfigError(AbrsiError):
    pass


class TapeError(AbrsiError):
    """Une bande de gradient est réutilisée ou ne correspond pas au réseau."""


class NonFiniteGradientError(AbrsiError):
    def __init__(self, tensor_name):
        self.tensor_name = tensor_name
        super().__init__(f"Gradient non fini pour le tenseur '{tensor_name}'")


class TrainingDivergedError(AbrsiError):
    def __init__(self, epoch, breakdown):
        self.epoch = epoch
        self.breakdown = dict(breakdown)
        details = ", ".join(f"{name}={value}" for name, value in self.breakdown.items())
        super().__init__(f"Perte non finie à l'époque {epoch}: {details}")


class UnknownPresetError(AbrsiError):
    def __init__(self, name, known):
        self.name = name
        super().__init__(f"Préréglage d'ablation inconnu '{name}'. Connus: {', '.join(sorted(known))}")
