"""DDL bundle for the emergency-notification example application.

One place defines the datatypes, datasets, indexes, feeds, the channel
function, and the channel itself, so the drivers, the oracle checks, and
the tests all run the exact same schema through the statement language.
"""

from __future__ import annotations

from ..engine import Engine

CHANNEL = "EmergenciesNearMe"
FUNCTION = "RecentEmergenciesNearUser"
LOCATION_FEED = "LocationFeed"
REPORT_FEED = "ReportFeed"


def schema_statements() -> list[str]:
    return [
        """CREATE TYPE UserLocation AS {
            location: circle,
            userName: string,
            timestamp: datetime
        };""",
        """CREATE TYPE EmergencyReport AS {
            reportId: uuid,
            Etype: string,
            location: circle,
            timestamp: datetime
        };""",
        """CREATE TYPE Contact AS {
            contactName: string,
            phone: int64,
            address: string?
        };""",
        """CREATE TYPE EmergencyShelter AS {
            shelterName: string,
            location: point,
            contacts: {{ Contact }}?
        };""",
        "CREATE DATASET UserLocations(UserLocation) PRIMARY KEY userName;",
        "CREATE DATASET Shelters(EmergencyShelter) PRIMARY KEY shelterName;",
        "CREATE DATASET Reports(EmergencyReport) PRIMARY KEY reportId autogenerated;",
        "CREATE INDEX location_time ON UserLocations(timestamp) TYPE BTREE;",
        "CREATE INDEX u_location ON UserLocations(location) TYPE RTREE;",
        "CREATE INDEX s_location ON Shelters(location) TYPE RTREE;",
        "CREATE INDEX report_time ON Reports(timestamp) TYPE BTREE;",
    ]


def feed_statements(location_port: int = 0, report_port: int = 0,
                    host: str = "127.0.0.1") -> list[str]:
    return [
        """CREATE TYPE UserLocationFeedType AS {
            location: circle,
            userName: string
        };""",
        """CREATE TYPE EmergencyReportFeedType AS {
            Etype: string,
            location: circle
        };""",
        f"""CREATE FEED {LOCATION_FEED} WITH {{
            "adapter-name" : "socket_adapter",
            "sockets" : "{host}:{location_port}",
            "address-type" : "IP",
            "type-name" : "UserLocationFeedType",
            "format" : "json"
        }};""",
        f"""CREATE FEED {REPORT_FEED} WITH {{
            "adapter-name" : "socket_adapter",
            "sockets" : "{host}:{report_port}",
            "address-type" : "IP",
            "type-name" : "EmergencyReportFeedType",
            "format" : "json"
        }};""",
        """CREATE FUNCTION add_insert_time(record) {
            object_merge({"timestamp": current_datetime()}, record)
        };""",
        f"CONNECT FEED {LOCATION_FEED} TO DATASET UserLocations APPLY FUNCTION add_insert_time;",
        f"CONNECT FEED {REPORT_FEED} TO DATASET Reports APPLY FUNCTION add_insert_time;",
    ]


def function_statement(window: str = "PT10S") -> str:
    return f"""CREATE FUNCTION {FUNCTION}(userName) {{
        SELECT report, shelters
        FROM
            (SELECT VALUE r FROM Reports r
                WHERE r.timestamp > current_datetime() - day_time_duration("{window}")) report,
            UserLocations u,
            (SELECT s.location FROM Shelters s
                WHERE spatial_intersect(s.location, u.location)) shelters
        WHERE u.userName = userName
            AND spatial_intersect(report.location, u.location)
    }};"""


def channel_statement(period: str = "PT10S", dedup: bool = True) -> str:
    clause = " DEDUP BY report.reportId" if dedup else ""
    return (f"CREATE REPETITIVE CHANNEL {CHANNEL} USING {FUNCTION}@1 "
            f'PERIOD duration("{period}"){clause};')


def polling_query(x: float, y: float, radius: float, window: str = "PT10S") -> str:
    """Per-user ad-hoc query the passive pollers issue.

    Both spatial predicates use the user's circle, matching the channel
    function, so active and passive modes produce identical result sets.
    """
    user = f"circle(\"{x!r},{y!r} {radius!r}\")"
    return f"""SELECT r, shelters
        FROM Reports r,
            (SELECT s.location FROM Shelters s
                WHERE spatial_intersect(s.location, {user})) shelters
        WHERE r.timestamp > current_datetime() - day_time_duration("{window}")
            AND spatial_intersect(r.location, {user});"""


def install(engine: Engine, *, with_feeds: bool = False, with_channel: bool = True,
            window: str = "PT10S", period: str = "PT10S", dedup: bool = True,
            location_port: int = 0, report_port: int = 0) -> None:
    statements = schema_statements()
    if with_feeds:
        statements += feed_statements(location_port, report_port)
    statements.append(function_statement(window))
    if with_channel:
        statements.append(channel_statement(period, dedup))
    for text in statements:
        out = engine.execute(text)
        if out["status"] != "ok":
            raise RuntimeError(f"schema statement failed: {out['error']}\n{text}")
