from pandas import DataFrame
from pandas.api.extensions import register_dataframe_accessor

from typing import Dict


def build_queryString(conditions: Dict) -> str:
    """Constructs a query string for use in DataFrame.query method. Conditions are combined into a chain with "and" operators. Keys in the conditions dictionary should be column names,
    values can be numbers, strings, or tuples of 2 numbers for intervals."""

    queryString_components = []

    for columnName, columnValue in conditions.items():
        if isinstance(columnValue, tuple):
            queryString_components.append('{0} <= {1} <= {2}'.format(columnValue[0], columnName, columnValue[1]))
        elif isinstance(columnValue, str):
            queryString_components.append('{0} == "{1}"'.format(columnName, columnValue))
        elif any(isinstance(columnValue, _type) for _type in [float, int]):
            queryString_components.append('{0} == {1}'.format(columnName, columnValue))

    queryString = str.join(' and ', queryString_components)
    return queryString


@register_dataframe_accessor('bm')
class TrainingLogAccessor:
    """Summaries over a Logbook DataFrame (columns eventType, place, result, workedOn, inRelationTo, iteration)."""

    def __init__(self, logDF: DataFrame):
        self._logDF = logDF

    def select(self, conditions: Dict) -> DataFrame:
        if not conditions:
            return self._logDF
        return self._logDF.query(build_queryString(conditions))

    @property
    def steps(self) -> DataFrame:
        return self.select({'eventType': 'trainingStep'}).sort_values('iteration')

    @property
    def initialLoss(self) -> float:
        return float(self.steps['result'].iloc[0])

    @property
    def finalLoss(self) -> float:
        return float(self.steps['result'].iloc[-1])

    @property
    def lossRatio(self) -> float:
        return self.finalLoss / self.initialLoss

    @property
    def bestIteration(self) -> int:
        steps = self.steps
        return int(steps.loc[steps['result'].idxmin(), 'iteration'])

    def smoothedLoss(self, window: int = 10) -> DataFrame:
        steps = self.steps
        return steps.assign(smoothed=steps['result'].rolling(window, min_periods=1).mean())
