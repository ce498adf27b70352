#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Interface to the privstream config xml file.  Every field is
considered optional, with defaults stored as static members of the
ConfigWrapper class.  Command line flags are applied on top of these
by the callers.

"""
import os
import xml.etree.ElementTree as ET

from privstream.shared.common import getOptionalAttrib
from privstream.shared.common import checkProbability
from privstream.shared.common import parseSize
from privstream.shared.common import defaultConfigPath
from privstream.shared.errors import ValidationError
from toil.statsAndLogging import logger

PORT_BASE_ENV = "PRIVSTREAM_PORT_BASE"

class ConfigWrapper:
    defaultP = 0.995
    defaultQ = 0.999
    defaultPiA = 0.005
    defaultRows = 512
    defaultMessageBytes = 160
    defaultMaxTableBytes = 64 * 1024 * 1024
    defaultEpochMs = 2000
    defaultPeerTimeoutMs = 5000
    defaultAuditMode = 'eager'
    defaultDummyPolicy = 'accept'
    defaultStations = 1157
    defaultTotalVehicles = 222704
    defaultMaxPerStation = 860
    defaultMinPerStation = 1
    defaultShape = 2.5
    defaultOffPeakStations = 1017
    defaultOffPeakFraction = 0.1
    defaultBenchRows = 1024
    defaultBenchParties = 8
    defaultBenchMessageBytes = 160
    defaultBenchDuration = 5.0
    defaultBenchClients = 4
    defaultPortBase = 7400

    auditModes = ('eager', 'lazy', 'off')
    dummyPolicies = ('accept', 'strict')

    def __init__(self, xmlRoot):
        self.xmlRoot = xmlRoot

    @staticmethod
    def load(path=None):
        if path is None:
            path = defaultConfigPath()
        try:
            return ConfigWrapper(ET.parse(path).getroot())
        except (OSError, ET.ParseError) as e:
            raise ValidationError("Unable to read config file {}: {}".format(path, e))

    def _elem(self, name):
        return self.xmlRoot.find(name)

    def getPrivacyElem(self):
        return self._elem("privacy")

    def getGeometryElem(self):
        return self._elem("geometry")

    def getEpochElem(self):
        return self._elem("epoch")

    def getAuditElem(self):
        return self._elem("audit")

    def getSyntheticElem(self):
        return self._elem("synthetic")

    def getBenchElem(self):
        return self._elem("bench")

    def getServerElem(self):
        return self._elem("server")

    def getP(self):
        return checkProbability(getOptionalAttrib(self.getPrivacyElem(), "p", float, self.defaultP), "p")

    def getQ(self):
        return checkProbability(getOptionalAttrib(self.getPrivacyElem(), "q", float, self.defaultQ), "q")

    def getPiA(self):
        return checkProbability(getOptionalAttrib(self.getPrivacyElem(), "pi_a", float, self.defaultPiA), "pi_a")

    def getRows(self):
        return getOptionalAttrib(self.getGeometryElem(), "rows", int, self.defaultRows)

    def getMessageBytes(self):
        return getOptionalAttrib(self.getGeometryElem(), "message_bytes", int, self.defaultMessageBytes)

    def getMaxTableBytes(self):
        return parseSize(getOptionalAttrib(self.getGeometryElem(), "max_table_bytes", str, self.defaultMaxTableBytes))

    def getEpochMs(self):
        epochMs = getOptionalAttrib(self.getEpochElem(), "duration_ms", int, self.defaultEpochMs)
        if epochMs < 100:
            raise ValidationError("epoch duration_ms must be at least 100, got {}".format(epochMs))
        return epochMs

    def getPeerTimeoutMs(self):
        return getOptionalAttrib(self.getEpochElem(), "peer_timeout_ms", int, self.defaultPeerTimeoutMs)

    def getAuditMode(self):
        mode = getOptionalAttrib(self.getAuditElem(), "mode", str, self.defaultAuditMode)
        if mode not in self.auditModes:
            raise ValidationError("audit mode must be one of {}, got {}".format(", ".join(self.auditModes), mode))
        return mode

    def getDummyPolicy(self):
        policy = getOptionalAttrib(self.getAuditElem(), "dummy_policy", str, self.defaultDummyPolicy)
        if policy not in self.dummyPolicies:
            raise ValidationError("audit dummy_policy must be one of {}, got {}".format(", ".join(self.dummyPolicies), policy))
        return policy

    def getSyntheticParams(self):
        """ dict of the <synthetic> attributes, keyed by attribute name """
        elem = self.getSyntheticElem()
        return {
            'stations': getOptionalAttrib(elem, "stations", int, self.defaultStations),
            'total_vehicles': getOptionalAttrib(elem, "total_vehicles", int, self.defaultTotalVehicles),
            'max_per_station': getOptionalAttrib(elem, "max_per_station", int, self.defaultMaxPerStation),
            'min_per_station': getOptionalAttrib(elem, "min_per_station", int, self.defaultMinPerStation),
            'shape': getOptionalAttrib(elem, "shape", float, self.defaultShape),
            'off_peak_stations': getOptionalAttrib(elem, "off_peak_stations", int, self.defaultOffPeakStations),
            'off_peak_fraction': checkProbability(getOptionalAttrib(elem, "off_peak_fraction", float, self.defaultOffPeakFraction),
                                                  "off_peak_fraction"),
        }

    def getBenchParams(self):
        elem = self.getBenchElem()
        return {
            'rows': getOptionalAttrib(elem, "rows", int, self.defaultBenchRows),
            'parties': getOptionalAttrib(elem, "parties", int, self.defaultBenchParties),
            'message_bytes': getOptionalAttrib(elem, "message_bytes", int, self.defaultBenchMessageBytes),
            'duration': getOptionalAttrib(elem, "duration", float, self.defaultBenchDuration),
            'clients': getOptionalAttrib(elem, "clients", int, self.defaultBenchClients),
        }

    def getPortBase(self):
        """ the environment variable wins over the config file """
        if os.environ.get(PORT_BASE_ENV):
            try:
                portBase = int(os.environ[PORT_BASE_ENV])
            except ValueError:
                raise ValidationError("{} must be an integer, got {}".format(PORT_BASE_ENV, os.environ[PORT_BASE_ENV]))
            logger.debug("Using port base {} from {}".format(portBase, PORT_BASE_ENV))
        else:
            portBase = getOptionalAttrib(self.getServerElem(), "port_base", int, self.defaultPortBase)
        if not 0 < portBase < 65536:
            raise ValidationError("port base {} is not a valid port".format(portBase))
        return portBase
