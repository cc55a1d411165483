from __future__ import annotations

import pytest

from beacon.errors import QuerySyntaxError
from beacon.query import parse, render
from beacon.query import ast
from beacon.query.parser import parse_all

FIG_STATEMENTS = [
    "USE emergencyNotifications;",
    """CREATE TYPE UserLocation AS {
        location: circle,
        userName: string,
        timestamp: datetime
    };""",
    """CREATE TYPE EmergencyShelter AS {
        shelterName: string,
        location: point,
        contacts: {{ Contact }}?
    };""",
    "CREATE DATASET UserLocations(UserLocation) PRIMARY KEY userName;",
    "CREATE DATASET Reports(EmergencyReport) PRIMARY KEY reportId autogenerated;",
    "CREATE INDEX u_location ON UserLocations(location) TYPE RTREE;",
    "CREATE INDEX report_time ON Reports(timestamp) TYPE BTREE;",
    """SELECT report, u.userName FROM
        (SELECT VALUE r FROM Reports r
            WHERE r.timestamp > current_datetime() - day_time_duration("PT10S")) report,
        UserLocations u
        WHERE spatial_intersect(report.location, u.location);""",
    """INSERT INTO Shelters (
        {"shelterName" : "swan",
         "location" : point("2437.34,1330.59"),
         "contacts" : {{
            {"contactName" : "Jack Shepherd", "phone" : 4815162342},
            {"contactName" : "John Locke", "phone" : 1234567890}
         }}}
    );""",
    """CREATE FEED LocationFeed WITH {
        "adapter-name" : "socket_adapter",
        "sockets" : "bad_cluster.edu:10009",
        "address-type" : "IP",
        "type-name" : "UserLocationFeedType",
        "format" : "adm"
    };""",
    """CREATE FUNCTION add_insert_time(record) {
        object_merge({"timestamp": current_datetime()}, record)
    };""",
    "CONNECT FEED LocationFeed TO DATASET UserLocations APPLY FUNCTION add_insert_time;",
    "START FEED LocationFeed;",
    "STOP FEED LocationFeed;",
    """CREATE FUNCTION RecentEmergenciesNearUser(userName) {
        SELECT report, shelters
        FROM
            (SELECT VALUE r FROM Reports r
                WHERE r.timestamp > current_datetime() - day_time_duration("PT10S")) report,
            UserLocations u,
            (SELECT s.location FROM Shelters s
                WHERE spatial_intersect(s.location, u.location)) shelters
        WHERE u.userName = userName
            AND spatial_intersect(report.location, u.location)
    };""",
    """CREATE REPETITIVE CHANNEL EmergenciesNearMe USING
        RecentEmergenciesNearUser@1 PERIOD duration("PT10S");""",
    """CREATE REPETITIVE CHANNEL Dedup USING
        RecentEmergenciesNearUser@1 PERIOD duration("PT10S") DEDUP BY report.reportId;""",
    'CREATE BROKER BADBrokerOne AT "BAD_broker_one.edu";',
    'SUBSCRIBE TO EmergenciesNearMe("dharma1") ON BADBrokerOne;',
    'UNSUBSCRIBE "1c35" FROM EmergenciesNearMe;',
    """CREATE PROCEDURE CountBrokerSubscriptions(brokerName) {
        SELECT array_count(
            (SELECT sub
             FROM EmergenciesNearMeSubscriptions sub
             WHERE sub.brokerName = brokerName))
    };""",
    'EXECUTE CountBrokerSubscriptions("BADBrokerOne");',
    """CREATE PROCEDURE deleteStaleResults() {
        DELETE result FROM EmergenciesNearMeResults
        WHERE result.channelExecutionTime <
            current_datetime() - day_time_duration("PT24H")
    } PERIOD duration("PT24H");""",
    "EXECUTE deleteStaleResults();",
    """CREATE PROCEDURE SubCountsForEmergenciesNearMe() {
        INSERT INTO SubscriptionStatistics (
            SELECT current_datetime() AS timestamp, b.brokerName,
                (SELECT VALUE array_count(
                    (SELECT sub
                     FROM EmergenciesNearMeSubscriptions sub
                     WHERE sub.brokerName = b.brokerName)))
                AS subscriptions
            FROM Metadata.`Broker` b)
    } PERIOD duration("PT1H");""",
    """SELECT r, shelters
        FROM Reports r,
            (SELECT s.location FROM Shelters s
                WHERE spatial_intersect(s.location, circle("2437.3,1330.5 100.0"))) shelters
        WHERE r.timestamp > current_datetime() - day_time_duration("PT10S")
            AND spatial_intersect(r.location, point("2437.3,1330.5"));""",
]


@pytest.mark.parametrize("text", FIG_STATEMENTS, ids=range(len(FIG_STATEMENTS)))
def test_grammar_covers_statement(text):
    parse(text)


@pytest.mark.parametrize("text", FIG_STATEMENTS, ids=range(len(FIG_STATEMENTS)))
def test_print_parse_round_trip(text):
    tree = parse(text)
    printed = render(tree)
    assert parse(printed) == tree


def test_query_shape_of_joined_select():
    stmt = parse(FIG_STATEMENTS[7])
    sel = stmt.select
    assert [s.alias for s in sel.sources] == ["report", "u"]
    assert isinstance(sel.sources[0].source, ast.SelectExpr)
    assert sel.sources[1].source == "UserLocations"
    # the where clause is one spatial_intersect conjunct
    assert isinstance(sel.where, ast.Call)
    assert sel.where.name == "spatial_intersect"


def test_create_broker_shape():
    stmt = parse('CREATE BROKER BADBrokerOne AT "BAD_broker_one.edu";')
    assert stmt == ast.CreateBroker("BADBrokerOne", "BAD_broker_one.edu")


def test_channel_statement_shape():
    stmt = parse(FIG_STATEMENTS[15])
    assert stmt.name == "EmergenciesNearMe"
    assert stmt.function == "RecentEmergenciesNearUser"
    assert stmt.arity == 1
    assert stmt.period.total_seconds() == 10


def test_syntax_error_carries_position():
    with pytest.raises(QuerySyntaxError) as err:
        parse("SELECT FROM;")
    assert err.value.line == 1
    assert err.value.column > 0


def test_trailing_garbage_rejected():
    with pytest.raises(QuerySyntaxError):
        parse("START FEED f; bogus")


def test_comments_are_skipped():
    stmts = parse_all("""
        -- line comment
        /* block
           comment */
        START FEED f;
    """)
    assert stmts == [ast.StartFeed("f")]


def test_parse_never_touches_catalog():
    # names are free-form at parse time; binding is a separate stage
    stmt = parse("SELECT x.a FROM NoSuchDataset x;")
    assert stmt.select.sources[0].source == "NoSuchDataset"
