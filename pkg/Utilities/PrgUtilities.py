import os
import logging

from collections import UserList

from pandas import DataFrame

log = logging.getLogger(__name__)


def getattr_fromAddress(object, address: str):
    address_split = address.split('.')
    for address_level in address_split:
        object = getattr(object, address_level)
    return object


def setattr_fromAddress(object, attributeName: str, value):
    address_split = attributeName.split('.')
    for address_level in address_split[:-1]:
        object = getattr(object, address_level)
    setattr(object, address_split[-1], value)


def get_workerThreads() -> int:
    """Worker thread cap from BIMOTION_THREADS, at least 1."""
    value = os.environ.get('BIMOTION_THREADS', '1')
    try:
        return max(1, int(value))
    except ValueError:
        log.warning('InputError: BIMOTION_THREADS = %r is not an integer, using 1 thread.', value)
        return 1


class twoList(UserList):

    def __init__(self, *args):
        super(twoList, self).__init__(*args)


class Logbook:
    def __init__(self):
        self.logbook = []

    def log(self, eventType: str, place, result, workedOn=None, inRelationTo=None, iteration: int = None):
        # EventType - e.g. 'trainingStep', 'evaluation', 'divergence'
        # Place - function or phase that emitted the event
        # Result - scalar outcome (loss, PSNR, ...)
        # WorkedOn - sample index or stage name
        # InRelationTo - related block / parameter group
        self.logbook.append({'eventType': eventType,
                             'place': place,
                             'result': result,
                             'workedOn': workedOn,
                             'inRelationTo': inRelationTo,
                             'iteration': iteration})

    def to_DF(self) -> DataFrame:
        return DataFrame(self.logbook, columns=['eventType', 'place', 'result', 'workedOn', 'inRelationTo', 'iteration'])

    def __len__(self):
        return len(self.logbook)
