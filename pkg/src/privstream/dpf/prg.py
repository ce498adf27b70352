#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Seed expansion for DPF keys.  Anything with a seed_bytes attribute and an
expand(seed, length) method can stand in for AesCtrPrg.
"""
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from privstream.shared.common import random_bytes
from privstream.shared.errors import ValidationError

class AesCtrPrg(object):
    """ AES-128 in counter mode over a stream of zeros, keyed by the seed """
    seed_bytes = 16
    _nonce = bytes(16)

    def random_seed(self, rng=None):
        return random_bytes(rng, self.seed_bytes)

    def expand(self, seed, length):
        if len(seed) != self.seed_bytes:
            raise ValidationError("PRG seed must be {} bytes, got {}".format(self.seed_bytes, len(seed)))
        encryptor = Cipher(algorithms.AES(bytes(seed)), modes.CTR(self._nonce)).encryptor()
        return encryptor.update(bytes(length)) + encryptor.finalize()

    def __repr__(self):
        return "AesCtrPrg()"

DEFAULT_PRG = AesCtrPrg()
