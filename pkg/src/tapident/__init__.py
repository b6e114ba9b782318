"""tapident: passive Ethernet tap toolkit for minimal-disclosure server
identification with a tamper-evident audit trail."""

from .audit import (AuditEvent, AuditEventKind, AuditLog, DestructionRecord,
                    SessionClock, VerifyResult, begin_session, verify_chain)
from .capture import (CaptureSource, FrameStream, SequenceFrameStream,
                      Terminal, TerminalKind, open_source)
from .frames import (CapturedFrame, EthernetHeaderView, IpSourceView,
                     IpVersion, LinkType, SourceAddressRecord, SourcePair,
                     extract_source_pair, mac_text, parse_ethernet,
                     parse_ip_source)
from .framework import (IdentificationPlugin, ParameterSpec, ParameterType,
                        PluginDescriptor, PluginRegistry, PluginResult,
                        PluginRun, ResultKind, RunStatus)
from .plugins import (AddressListResult, KnownIpPlugin, MatchTallyResult,
                      SourceAddrPlugin, default_registry)
from .session import RelevanceVerdict, Session
from .tapmodel import (LossBudget, TapLossProfile, alternating_gaps,
                       apply_tap, attenuation_db, budget_check,
                       icmp_experiment)

__version__ = "0.1.0"
