import logging
import os
import struct

import numpy as np

from collections import OrderedDict
from typing import Dict, Union

from matplotlib import image as mpimage
from pandas import read_csv, DataFrame
from pandas.errors import EmptyDataError, ParserError

from Models.Tensors import Tensor, ParamStore, get_defaultDtype
from Models.Fields import MotionField, Endpoint
from Models.Configs import PipelineConfig, get_fieldAddresses
from Utilities.PrgUtilities import getattr_fromAddress, setattr_fromAddress
from Utilities.Exceptions import FlowFileError, WeightFileError, ImageFileError, ConfigError

log = logging.getLogger(__name__)

FLO_MAGIC = b'PIEH'
WEIGHTS_MAGIC = b'BIMW'
WEIGHTS_VERSION = 1


# IMAGES

def _read_ppm(filepath: str) -> np.ndarray:
    with open(filepath, 'rb') as file:
        content = file.read()
    tokens = []
    position = 0
    while len(tokens) < 4:
        while position < len(content) and content[position:position + 1].isspace():
            position += 1
        if content[position:position + 1] == b'#':
            while position < len(content) and content[position:position + 1] not in (b'\n', b'\r'):
                position += 1
            continue
        start = position
        while position < len(content) and not content[position:position + 1].isspace():
            position += 1
        if start == position:
            raise ImageFileError(filepath, 'incomplete PPM header')
        tokens.append(content[start:position])
    if tokens[0] != b'P6':
        raise ImageFileError(filepath, 'only binary PPM (P6) is supported, found {0!r}'.format(tokens[0]))
    try:
        width, height, maxValue = (int(token) for token in tokens[1:])
    except ValueError:
        raise ImageFileError(filepath, 'non-numeric PPM header')
    position += 1
    dtype = np.dtype('u1') if maxValue < 256 else np.dtype('>u2')
    expected = width * height * 3 * dtype.itemsize
    if len(content) - position < expected:
        raise ImageFileError(filepath, 'truncated pixel data')
    pixels = np.frombuffer(content, dtype=dtype, count=width * height * 3, offset=position)
    return pixels.reshape(height, width, 3).astype(np.float64) / maxValue


def read_image(filepath: str) -> np.ndarray:
    """3xHxW array in [0, 1] from a PNG or binary PPM file."""
    extension = os.path.splitext(filepath)[1].lower()
    if not os.path.isfile(filepath):
        raise ImageFileError(filepath, 'file does not exist')
    if extension == '.ppm':
        pixels = _read_ppm(filepath)
    elif extension == '.png':
        try:
            pixels = np.asarray(mpimage.imread(filepath), dtype=np.float64)
        except (OSError, ValueError, SyntaxError) as error:
            raise ImageFileError(filepath, str(error))
        if pixels.max(initial=0) > 1:
            pixels = pixels / 255.0
    else:
        raise ImageFileError(filepath, 'unsupported extension "{0}", use .png or .ppm'.format(extension))
    if pixels.ndim == 2:
        pixels = np.stack([pixels] * 3, axis=-1)
    pixels = pixels[..., :3]
    return np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=get_defaultDtype())


def write_image(filepath: str, image: Union[np.ndarray, Tensor]) -> None:
    """Writes a 3xHxW (or HxWx3) image, clamped to [0, 1], as PNG or binary PPM."""
    pixels = np.asarray(image.data if isinstance(image, Tensor) else image, dtype=np.float64)
    if pixels.ndim == 3 and pixels.shape[0] == 3 and pixels.shape[-1] != 3:
        pixels = pixels.transpose(1, 2, 0)
    pixels = np.clip(pixels, 0, 1)
    extension = os.path.splitext(filepath)[1].lower()
    if extension == '.ppm':
        height, width = pixels.shape[:2]
        with open(filepath, 'wb') as file:
            file.write('P6\n{0} {1}\n255\n'.format(width, height).encode('ascii'))
            file.write(np.round(pixels * 255).astype(np.uint8).tobytes())
    elif extension == '.png':
        mpimage.imsave(filepath, pixels)
    else:
        raise ImageFileError(filepath, 'unsupported extension "{0}", use .png or .ppm'.format(extension))


# MOTION FIELDS

def write_flow(filepath: str, flow: Union[MotionField, np.ndarray]) -> None:
    """Middlebury .flo: magic PIEH, int32 width, int32 height, then row-major interleaved little-endian float32 (dx, dy)."""
    data = flow.numpy() if isinstance(flow, MotionField) else np.asarray(flow)
    _, height, width = data.shape
    with open(filepath, 'wb') as file:
        file.write(FLO_MAGIC)
        file.write(np.array([width, height], dtype='<i4').tobytes())
        file.write(np.ascontiguousarray(data.transpose(1, 2, 0), dtype='<f4').tobytes())


def read_flow(filepath: str, scale: int = 1, endpoint: Endpoint = Endpoint.T_TO_1) -> MotionField:
    with open(filepath, 'rb') as file:
        content = file.read()
    if len(content) < 12:
        raise FlowFileError(filepath, 'header shorter than 12 bytes')
    if content[:4] != FLO_MAGIC:
        reason = 'foreign byte order' if content[:4] == FLO_MAGIC[::-1] else 'bad magic {0!r}'.format(content[:4])
        raise FlowFileError(filepath, reason)
    width, height = np.frombuffer(content, dtype='<i4', count=2, offset=4)
    if width < 0 or height < 0:
        raise FlowFileError(filepath, 'negative dimensions')
    expected = 12 + int(width) * int(height) * 2 * 4
    if len(content) < expected:
        raise FlowFileError(filepath, 'truncated payload ({0} of {1} bytes)'.format(len(content), expected))
    values = np.frombuffer(content, dtype='<f4', count=int(width) * int(height) * 2, offset=12).reshape(int(height), int(width), 2)
    return MotionField(Tensor(values.transpose(2, 0, 1).astype(np.float32)), scale, endpoint)


# WEIGHTS

def write_weights(filepath: str, weights: Union[ParamStore, Dict[str, np.ndarray]]) -> None:
    """BIMW container: magic, u32 version, u32 count; per entry u16 name length, UTF-8 name, u8 rank, u32 dims, little-endian float32 values."""
    arrays = weights.get_asDict() if isinstance(weights, ParamStore) else weights
    with open(filepath, 'wb') as file:
        file.write(WEIGHTS_MAGIC)
        file.write(struct.pack('<II', WEIGHTS_VERSION, len(arrays)))
        for name, array in arrays.items():
            encodedName = name.encode('utf-8')
            array = np.asarray(array)
            file.write(struct.pack('<H', len(encodedName)))
            file.write(encodedName)
            file.write(struct.pack('<B', array.ndim))
            file.write(struct.pack('<{0}I'.format(array.ndim), *array.shape))
            file.write(np.ascontiguousarray(array, dtype='<f4').tobytes())


def read_weights(filepath: str) -> 'OrderedDict[str, np.ndarray]':
    with open(filepath, 'rb') as file:
        content = file.read()

    def take(position: int, size: int):
        if position + size > len(content):
            raise WeightFileError(filepath, 'truncated at byte {0}'.format(position))
        return content[position:position + size], position + size

    magic, position = take(0, 4)
    if magic != WEIGHTS_MAGIC:
        raise WeightFileError(filepath, 'bad magic {0!r}'.format(magic))
    header, position = take(position, 8)
    version, count = struct.unpack('<II', header)
    if version != WEIGHTS_VERSION:
        raise WeightFileError(filepath, 'unsupported version {0}'.format(version))

    arrays = OrderedDict()
    for _ in range(count):
        raw, position = take(position, 2)
        nameLength, = struct.unpack('<H', raw)
        raw, position = take(position, nameLength)
        name = raw.decode('utf-8')
        raw, position = take(position, 1)
        rank, = struct.unpack('<B', raw)
        raw, position = take(position, 4 * rank)
        shape = struct.unpack('<{0}I'.format(rank), raw)
        raw, position = take(position, 4 * int(np.prod(shape, dtype=np.int64)))
        arrays[name] = np.frombuffer(raw, dtype='<f4').reshape(shape).astype(np.float32)
    if position != len(content):
        log.warning('DataWarning: %d trailing bytes ignored in %s', len(content) - position, filepath)
    return arrays


def load_weights(store: ParamStore, filepath: str, strict: bool = True) -> None:
    try:
        store.load_fromDict(read_weights(filepath), strict=strict)
    except KeyError as error:
        raise WeightFileError(filepath, str(error))


# CONFIGURATION

def read_config_DF(filepath: str) -> DataFrame:
    """Wrapper around pandas' read_csv for flat 'dotted.key = value' files; '#' starts a comment."""
    kwargs = {'sep': r'\s*=\s*',
              'engine': 'python',
              'comment': '#',
              'header': None,
              'names': ['key', 'value'],
              'dtype': str,
              'skipinitialspace': True}
    try:
        configDF = read_csv(filepath, **kwargs)
    except EmptyDataError:
        return DataFrame(columns=['key', 'value'])
    except ParserError as error:
        raise ConfigError('ConfigError: {0} could not be parsed - {1}'.format(filepath, error))
    configDF['key'] = configDF['key'].str.strip()
    configDF['value'] = configDF['value'].str.strip()
    return configDF.dropna(how='all')


def _strip_quotes(text: str) -> str:
    if len(text) >= 2 and text[0] == text[-1] and text[0] in ('"', "'"):
        return text[1:-1]
    return text


def parse_configValue(text: str, current):
    """Casts text to the type of the value it replaces."""
    text = _strip_quotes(str(text).strip())
    if isinstance(current, bool):
        if text.lower() not in ('true', 'false', '1', '0', 'yes', 'no'):
            raise ValueError('"{0}" is not a boolean'.format(text))
        return text.lower() in ('true', '1', 'yes')
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, list):
        inner = text.strip('[]').strip()
        itemType = type(current[0]) if current else int
        return [itemType(_strip_quotes(item.strip())) for item in inner.split(',') if item.strip()]
    return text


def apply_config_DF(cfg: PipelineConfig, configDF: DataFrame) -> PipelineConfig:
    addresses = set(get_fieldAddresses(cfg))
    for _, row in configDF.iterrows():
        key, value = row['key'], row['value']
        if key not in addresses:
            raise ConfigError('ConfigError: Unknown configuration key "{0}"'.format(key))
        if value is None or (isinstance(value, float) and np.isnan(value)):
            raise ConfigError('ConfigError: Key "{0}" has no value'.format(key))
        current = getattr_fromAddress(cfg, key)
        try:
            setattr_fromAddress(cfg, key, parse_configValue(value, current))
        except ValueError as error:
            raise ConfigError('ConfigError: Bad value for "{0}": {1}'.format(key, error))
    cfg.validate()
    return cfg


def load_config(filepath: str = None, cfg: PipelineConfig = None) -> PipelineConfig:
    cfg = cfg if cfg is not None else PipelineConfig()
    if filepath is None:
        return cfg
    if not os.path.isfile(filepath):
        raise ConfigError('ConfigError: Configuration file {0} does not exist'.format(filepath))
    return apply_config_DF(cfg, read_config_DF(filepath))


def write_config(filepath: str, cfg: PipelineConfig) -> None:
    with open(filepath, 'w') as file:
        for address in get_fieldAddresses(cfg):
            value = getattr_fromAddress(cfg, address)
            if isinstance(value, str):
                value = '"{0}"'.format(value)
            elif isinstance(value, bool):
                value = str(value).lower()
            file.write('{0} = {1}\n'.format(address, value))
