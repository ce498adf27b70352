#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt
