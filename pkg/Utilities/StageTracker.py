import logging

from collections import OrderedDict
from typing import List

from pandas import DataFrame

from Models.Fields import BilateralPair
from Utilities.Exceptions import SymmetryViolationError

log = logging.getLogger(__name__)


class StageTracker:
    """Records the bilateral field pair produced at each pipeline stage and checks V_t->0 = -V_t->1 bit-exactly as it arrives."""

    def __init__(self, strict: bool = True):
        self.strict = strict
        self.stageTracker = OrderedDict()

    def trackStage(self, stageName: str, pair: BilateralPair) -> BilateralPair:
        residual = pair.get_maxAsymmetry()
        self.stageTracker[stageName] = {'pair': pair, 'scale': pair.scale, 'resolution': tuple(pair.resolution), 'maxAsymmetry': residual}
        if residual != 0:
            if self.strict:
                raise SymmetryViolationError(stageName, residual)
            log.warning('DataWarning: Stage %s breaks field symmetry by %g', stageName, residual)
        return pair

    @property
    def stages(self) -> List[str]:
        return list(self.stageTracker)

    def __getitem__(self, stageName: str) -> BilateralPair:
        return self.stageTracker[stageName]['pair']

    def __len__(self):
        return len(self.stageTracker)

    def to_DF(self) -> DataFrame:
        rows = [{'stage': name, 'scale': entry['scale'], 'height': entry['resolution'][0], 'width': entry['resolution'][1],
                 'maxAsymmetry': entry['maxAsymmetry']} for name, entry in self.stageTracker.items()]
        return DataFrame(rows, columns=['stage', 'scale', 'height', 'width', 'maxAsymmetry'])
