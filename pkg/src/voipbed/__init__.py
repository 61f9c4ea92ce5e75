"""voipbed: a self-contained VoIP interconnect testbed.

An IMS-style SIP registrar/proxy and a PBX-style B2BUA gateway are wired
together through an ENUM (E.164 -> URI) DNS resolver, all over loopback
UDP, plus the measurement machinery: post-dial-delay under increasing call
load, overload detection, and ENUM query throughput.
"""

__version__ = "0.1.0"
